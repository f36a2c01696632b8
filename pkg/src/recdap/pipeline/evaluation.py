from __future__ import annotations

import numpy as np

from ..kg_data import Dataset, evaluation_episode
from .metrics import Metrics, compute_metrics, rank_of_true
from .model import ReCDAP


def rank_episode(model: ReCDAP, dataset: Dataset, relation: int, rng: np.random.Generator,
                 filtered: bool = True, max_queries: int | None = None) -> list[int]:
    """Ranks of every query tail of one relation, from a single diffusion sample."""
    task = evaluation_episode(dataset, relation, model.config.few, rng, max_queries)
    heads = np.array([q.head for q in task.query_pos], dtype=np.int64)
    extra = np.concatenate([heads, task.candidates])
    state = model.support([task], rng, train=False, extra_entities=extra)
    scores = model.score_candidates(state, heads, task.candidates)
    ranks = []
    for i, q in enumerate(task.query_pos):
        exclude = dataset.true_tails(q.head, q.relation) - {q.tail} if filtered else set()
        ranks.append(rank_of_true(scores[i], task.candidates, q.tail, exclude))
    return ranks


def evaluate(model: ReCDAP, dataset: Dataset, split: str = "valid") -> dict:
    """Metrics report for every task relation of ``split``.

    Each relation gets its own RNG stream derived from (seed, relation id), so
    results do not depend on evaluation order.
    """
    cfg = model.config
    all_ranks: list[int] = []
    per_relation = {}
    for rel in dataset.split_relations(split):
        if len(dataset.relation_triples(rel)) < cfg.few + 1:
            continue
        rng = np.random.default_rng([cfg.seed, 1, rel])
        ranks = rank_episode(model, dataset, rel, rng, cfg.filtered, cfg.max_eval_queries)
        per_relation[dataset.relations[rel]] = compute_metrics(ranks).check_invariants().as_dict()
        all_ranks.extend(ranks)
    metrics = compute_metrics(all_ranks).check_invariants() if all_ranks else None
    return report(metrics, per_relation, split, cfg)


def report(metrics: Metrics | None, per_relation: dict, split: str, cfg) -> dict:
    body = metrics.as_dict() if metrics else {"mrr": 0.0, "hits1": 0.0, "hits5": 0.0,
                                              "hits10": 0.0, "n_queries": 0}
    return {
        "variant": cfg.variant,
        "split": split,
        **body,
        "per_relation": per_relation,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
    }


METRICS_KEYS = {"variant": str, "split": str, "mrr": float, "hits1": float, "hits5": float,
                "hits10": float, "n_queries": int, "per_relation": dict, "config_hash": str,
                "seed": int}


def validate_report(rep: dict) -> None:
    """Raise ValueError unless ``rep`` matches the metrics JSON schema."""
    for key, typ in METRICS_KEYS.items():
        if key not in rep:
            raise ValueError(f"metrics report missing {key!r}")
        if not isinstance(rep[key], typ) or (typ is int and isinstance(rep[key], bool)):
            raise ValueError(f"metrics field {key!r} should be {typ.__name__}")
    extra = set(rep) - set(METRICS_KEYS)
    if extra:
        raise ValueError(f"unexpected metrics fields {sorted(extra)}")
    if rep["n_queries"]:
        Metrics(rep["mrr"], rep["hits1"], rep["hits5"], rep["hits10"], rep["n_queries"]).check_invariants()
    for name, sub in rep["per_relation"].items():
        Metrics(**sub).check_invariants()
