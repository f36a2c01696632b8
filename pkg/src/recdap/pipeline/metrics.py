from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractError, EvaluationError


@dataclass(frozen=True)
class Metrics:
    mrr: float
    hits1: float
    hits5: float
    hits10: float
    n_queries: int

    def as_dict(self) -> dict:
        return asdict(self)

    def check_invariants(self):
        ok = (
            0.0 <= self.hits1 <= self.hits5 <= self.hits10 <= 1.0
            and 0.0 < self.mrr <= 1.0
            and self.mrr >= self.hits1
        )
        if not ok:
            raise ContractError(f"metrics violate ordering/range invariants: {self}")
        return self


def compute_metrics(ranks) -> Metrics:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ContractError("compute_metrics needs at least one rank")
    if np.any(ranks < 1):
        raise ContractError("ranks are 1-based")
    ranks = ranks.astype(np.float64)
    return Metrics(
        mrr=float(np.mean(1.0 / ranks)),
        hits1=float(np.mean(ranks <= 1)),
        hits5=float(np.mean(ranks <= 5)),
        hits10=float(np.mean(ranks <= 10)),
        n_queries=int(ranks.size),
    )


def rank_of_true(scores, candidates, true_tail: int, exclude=()) -> int:
    """1-based rank of ``true_tail`` among ``candidates`` by descending score.

    Candidates in ``exclude`` (other known-true tails) are dropped first;
    ties are broken by ascending candidate id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.int64)
    pos = np.nonzero(candidates == true_tail)[0]
    if len(pos) == 0:
        raise EvaluationError(f"true tail {true_tail} missing from the candidate set")
    s_true = scores[pos[0]]
    keep = candidates != true_tail
    if len(exclude):
        keep &= ~np.isin(candidates, np.fromiter(exclude, dtype=np.int64))
    s, c = scores[keep], candidates[keep]
    return int(1 + np.sum(s > s_true) + np.sum((s == s_true) & (c < true_tail)))
