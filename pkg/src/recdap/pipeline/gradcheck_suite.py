"""Finite-difference gradient checks for every module and the composed loss.

Small dimensions keep the whole suite to well under a minute.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass

import numpy as np

from .. import diffusion as dm
from .. import numerics as nx
from ..aggregator import GlobalAggregator
from ..kg_data import EmbeddingStore, NeighborGraph, sample_episode
from ..pooler import AttentionPooler, pool_pos_neg
from ..relation_learner import RelationLearner
from ..scorer import Scorer, margin_loss, score
from ..synth import SynthConfig, write_fixture

MODULE_TOLERANCE = 1e-3
PRIMITIVE_TOLERANCE = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: max rel err {self.max_rel_error:.2e} (tol {self.tolerance:g})"


PRIMITIVES = {
    "linear": lambda t: nx.linear(t, nx.Tensor(np.arange(10.0).reshape(2, 5) / 9), nx.Tensor(np.ones(2))) ** 2,
    "conv1d": lambda t: nx.conv1d(t.reshape(1, 3, 5), nx.Tensor(np.linspace(-1, 1, 30).reshape(2, 3, 5)), None, 2) ** 2,
    "leaky_relu": lambda t: nx.leaky_relu(t, 0.01) * 3.0,
    "sigmoid": nx.sigmoid,
    "tanh": nx.tanh,
    "silu": nx.silu,
    "softmax": lambda t: nx.softmax(t, axis=-1) * nx.Tensor(np.arange(1.0, 6.0)),
    "segment_softmax": lambda t: nx.segment_softmax(t.reshape(-1), np.arange(15) % 4, 4) * nx.Tensor(np.arange(15.0)),
    "segment_sum": lambda t: nx.segment_sum(t, [0, 1, 0], 2) ** 2,
    "norm": lambda t: nx.norm(t, axis=-1),
    "concat_split": lambda t: nx.split(nx.concat([t, t * t], axis=1), [2, 8], axis=1)[1] * 3.0,
}


def check_primitives(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in PRIMITIVES.items():
        err = max(nx.check_input_gradient(fn, rng.normal(size=(3, 5))) for _ in range(3))
        out.append(CheckResult(f"primitive.{name}", err, PRIMITIVE_TOLERANCE))
    return out


def _graph(n: int, rng) -> NeighborGraph:
    deg = rng.integers(0, 4, size=n)
    offsets = np.concatenate([[0], np.cumsum(deg)])
    return NeighborGraph(offsets, rng.integers(0, 3, size=offsets[-1]), rng.integers(0, n, size=offsets[-1]), 50)


def _module(name, fn, registry) -> CheckResult:
    rep = nx.check_gradients(fn, registry, tolerance=MODULE_TOLERANCE, max_entries=12)
    return CheckResult(name, rep.max_rel_error, MODULE_TOLERANCE)


def check_modules(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    d = 3
    results = []

    reg = nx.ParamRegistry(seed)
    store = EmbeddingStore(nx.Tensor(rng.normal(size=(8, d))), nx.Tensor(rng.normal(size=(3, d)))).register(reg)
    agg = GlobalAggregator(reg, d)
    graph = _graph(8, rng)
    head = nx.Tensor(rng.normal(size=(3, 2 * d)))
    triples = [(0, 0, 1), (2, 1, 5), (7, 2, 3)]
    results.append(_module("global_aggregator", lambda: nx.tanh(agg.encode_triples(triples, graph, store) * head).sum(), reg))

    reg = nx.ParamRegistry(seed + 1)
    rl = RelationLearner(reg, 2 * d, 2, d)
    z = nx.Tensor(rng.normal(size=(2, 3, 2 * d)))
    target = nx.Tensor(rng.normal(size=(2, d)))
    results.append(_module("relation_learner", lambda: ((rl(z) - target) ** 2).sum(), reg))

    reg = nx.ParamRegistry(seed + 2)
    pred = dm.NoisePredictor(reg, 2 * d, 3 * d + 2, channels=(2, 3, 4), time_width=4, embed_width=3)
    z0 = nx.Tensor(rng.normal(size=(2, 6, 2 * d)))
    cond = dm.build_condition(nx.Tensor(rng.normal(size=(2, d))), z0, [1, 1, 1, 0, 0, 0])
    t = np.array([3, 77])
    eps = rng.standard_normal((2, 8, 2 * d))
    sched = dm.build_schedule()
    results.append(_module("recd_diffusion", lambda: dm.diffusion_loss(z0, cond, sched, None, pred, t=t, eps=eps).loss, reg))

    reg = nx.ParamRegistry(seed + 3)
    pos = AttentionPooler(reg, 2 * d, prefix="pooler.pos")
    neg = AttentionPooler(reg, 2 * d, prefix="pooler.neg")
    rows = nx.Tensor(rng.normal(size=(2, 6, 2 * d)))
    results.append(_module("attention_pooler", lambda: nx.tanh(pool_pos_neg(rows, 3, pos, neg)).sum(), reg))

    reg = nx.ParamRegistry(seed + 4)
    sc = Scorer(reg, d, 4 * d)
    h, tl, r = (nx.Tensor(rng.normal(size=(2, 3, d))) for _ in range(3))
    lat = nx.Tensor(rng.normal(size=(2, 4 * d)))

    def scorer_loss():
        hp, tp = sc.project_entities(h, tl, lat)
        s = score(hp, r, tp)
        return margin_loss(s[:, :2], s[:, 1:], 1.0) + (s * s).mean()

    results.append(_module("scorer", scorer_loss, reg))
    results.append(check_episode(seed))
    return results


def check_episode(seed: int = 0) -> CheckResult:
    """The composed margin + MSE loss, with every parameter of the model probed."""
    from .config import preset
    from .training import build_run

    with tempfile.TemporaryDirectory() as tmp:
        root = write_fixture(tmp, SynthConfig(entities=40, relations=6, noise_relations=2, noise_triples=60,
                                              dim=4, split=(4, 1, 1), heads_per_relation=10, seed=seed + 7))
        cfg = preset("synthetic", dataset_dir=str(root), dim=4, hidden=3, unet_channels=(2, 3, 4), time_width=4,
                     embed_width=3, batch_size=2, few=2, n_query=2, seed=seed)
        run = build_run(cfg)
    model, ds = run.model, run.dataset
    rng = np.random.default_rng(seed)
    rels = ds.split_relations("train")
    tasks = [sample_episode(ds, rels[i], cfg.few, cfg.n_query, rng) for i in range(2)]
    return _module("episode_loss", lambda: model.forward_episode(tasks, np.random.default_rng(seed)).total,
                   model.registry)


def run_suite(seed: int = 0) -> list[CheckResult]:
    return check_primitives(seed) + check_modules(seed)
