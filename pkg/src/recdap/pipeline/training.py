from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import numerics as nx
from ..errors import ConfigError, DivergenceError
from ..kg_data import (
    Dataset,
    EmbeddingStore,
    build_neighbor_graph,
    load_dataset,
    load_pretrained_embeddings,
    sample_episode,
)
from . import checkpoint
from .config import RunConfig
from .evaluation import evaluate
from .model import ReCDAP

log = logging.getLogger(__name__)


class Adam:
    def __init__(self, registry: nx.ParamRegistry, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.registry = registry
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(p.shape) for k, p in registry.items()}
        self.v = {k: np.zeros(p.shape) for k, p in registry.items()}

    def step(self, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name, p in self.registry.items():
            if not p.requires_grad:
                continue
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Run:
    config: RunConfig
    dataset: Dataset
    model: ReCDAP


def build_run(config: RunConfig, dataset: Dataset | None = None) -> Run:
    if dataset is None:
        if not config.dataset_dir:
            raise ConfigError("dataset_dir is required")
        dataset = load_dataset(config.dataset_dir)
    emb_path = config.embeddings
    if emb_path is None and dataset.root is not None and (dataset.root / "embeddings.json").exists():
        emb_path = str(dataset.root / "embeddings.json")
    if emb_path:
        store = load_pretrained_embeddings(emb_path, dataset, config.dim, seed=config.seed)
    else:
        store = EmbeddingStore.random(dataset.num_entities, dataset.num_relations, config.dim, config.seed)
    graph = build_neighbor_graph(dataset, config.max_neighbors, seed=config.seed)
    return Run(config, dataset, ReCDAP.for_dataset(config, dataset, graph, store))


@dataclass
class TrainResult:
    best_state: dict
    best_mrr: float
    best_step: int
    steps: int
    history: list = field(default_factory=list)
    best_report: dict | None = None


def train_step(model: ReCDAP, dataset: Dataset, relations, optimizer: Adam,
               rng: np.random.Generator, step: int):
    cfg = model.config
    picks = rng.choice(relations, size=cfg.batch_size, replace=cfg.batch_size > len(relations))
    tasks = [sample_episode(dataset, int(r), cfg.few, cfg.n_query, rng) for r in picks]
    try:
        out = model.forward_episode(tasks, rng, train=True)
    except DivergenceError as exc:
        raise DivergenceError(f"step {step}: {exc}") from None
    grads = nx.backward(out.total, model.registry)
    optimizer.step(grads)
    return out


def train(config: RunConfig, run: Run | None = None, out_dir=None, split: str = "valid") -> TrainResult:
    """Adam on margin + diffusion MSE with periodic validation.

    The best-validation-MRR parameters are retained; training stops after
    ``patience`` evaluations without improvement, on reaching
    ``target_mrr`` when set, or at ``max_steps``.
    """
    run = run or build_run(config)
    model, dataset = run.model, run.dataset
    rng = np.random.default_rng([config.seed, 0])
    relations = np.array([r for r in dataset.split_relations("train")
                          if len(dataset.relation_triples(r)) >= config.few + 1], dtype=np.int64)
    if len(relations) == 0:
        raise ConfigError("no training relation has enough triples for the few-shot setting")
    optimizer = Adam(model.registry, config.lr)
    best = TrainResult(model.registry.state_dict(), -1.0, 0, 0)
    stale = 0
    for step in range(1, config.max_steps + 1):
        out = train_step(model, dataset, relations, optimizer, rng, step)
        best.steps = step
        if step % config.eval_interval == 0 or step == config.max_steps:
            rep = evaluate(model, dataset, split)
            best.history.append({"step": step, "loss": out.total.item(), "margin": out.margin.item(),
                                 "mse": out.mse.item(), "mrr": rep["mrr"]})
            log.info("step %d loss %.4f margin %.4f mse %.4f %s MRR %.4f", step, out.total.item(),
                     out.margin.item(), out.mse.item(), split, rep["mrr"])
            if rep["mrr"] > best.best_mrr:
                best.best_mrr, best.best_step, best.best_report = rep["mrr"], step, rep
                best.best_state = model.registry.state_dict()
                stale = 0
            else:
                stale += 1
            if stale >= config.patience:
                log.info("early stop at step %d", step)
                break
            if config.target_mrr is not None and best.best_mrr >= config.target_mrr:
                break
    model.registry.load_state_dict(best.best_state)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(out / "checkpoint.ckpt", model, best)
        (out / "history.json").write_text(json.dumps(best.history, indent=2, sort_keys=True))
    return best


def save_checkpoint(path, model: ReCDAP, result: TrainResult | None = None):
    header = {
        "kind": "model",
        "config": model.config.to_dict(),
        "schedule": model.schedule.config(),
        "meta": {} if result is None else {"best_step": result.best_step, "best_mrr": result.best_mrr,
                                           "steps": result.steps},
    }
    return checkpoint.save(path, model.registry.state_dict(), header)


def load_model(path, dataset_dir=None) -> Run:
    header, state = checkpoint.load(path)
    if header.get("kind") != "model":
        raise ConfigError(f"{path} is not a model checkpoint")
    cfg = RunConfig.from_dict(header["config"])
    if dataset_dir is not None:
        cfg = cfg.replace(dataset_dir=str(dataset_dir))
    run = build_run(cfg)
    run.model.registry.load_state_dict(state)
    return run
