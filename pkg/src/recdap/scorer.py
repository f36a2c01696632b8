"""TransE-style scoring with latent-shifted entities, and the training losses."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ContractError, DimensionError


class Scorer:
    def __init__(self, registry: nx.ParamRegistry, dim: int, latent_width: int, prefix: str = "scorer"):
        self.W_h = registry.create(f"{prefix}.W_h", (dim, latent_width))
        self.W_t = registry.create(f"{prefix}.W_t", (dim, latent_width))

    def project_entities(self, h: nx.Tensor, t: nx.Tensor, z: nx.Tensor):
        """h' = h + W_h z, t' = t + W_t z; ``z`` broadcasts over middle axes."""
        return project_entities(h, t, z, self.W_h, self.W_t)


def project_entities(h, t, z, W_h, W_t):
    h, t, z = nx.as_tensor(h), nx.as_tensor(t), nx.as_tensor(z)
    if z.shape[-1] != W_h.shape[1] or h.shape[-1] != W_h.shape[0] or t.shape[-1] != W_t.shape[0]:
        raise DimensionError(
            f"projection shapes disagree: h {h.shape}, t {t.shape}, z {z.shape}, W_h {W_h.shape}"
        )
    shift_h = nx.linear(z, W_h)
    shift_t = nx.linear(z, W_t)
    if h.ndim > z.ndim:
        extra = (1,) * (h.ndim - z.ndim)
        shift_h = shift_h.reshape(shift_h.shape[:-1] + extra + (shift_h.shape[-1],))
    if t.ndim > z.ndim:
        extra = (1,) * (t.ndim - z.ndim)
        shift_t = shift_t.reshape(shift_t.shape[:-1] + extra + (shift_t.shape[-1],))
    return h + shift_h, t + shift_t


def score(h: nx.Tensor, r: nx.Tensor, t: nx.Tensor) -> nx.Tensor:
    """-||h + r - t||_2 over the last axis."""
    h, r, t = nx.as_tensor(h), nx.as_tensor(r), nx.as_tensor(t)
    if not (h.shape[-1] == r.shape[-1] == t.shape[-1]):
        raise DimensionError(f"score widths differ: {h.shape}, {r.shape}, {t.shape}")
    return -nx.norm(h + r - t, axis=-1)


def margin_loss(pos, neg, margin: float = 1.0) -> nx.Tensor:
    """(1/N) sum max(0, margin - (p_i - n_i))."""
    pos, neg = nx.as_tensor(pos), nx.as_tensor(neg)
    if pos.shape != neg.shape or pos.size == 0:
        raise ContractError(f"margin loss needs equal, non-empty score sets: {pos.shape} vs {neg.shape}")
    return nx.relu(margin - (pos - neg)).mean()


def total_loss(margin, mse) -> nx.Tensor:
    margin, mse = nx.as_tensor(margin), nx.as_tensor(mse)
    if not (np.isfinite(margin.data).all() and np.isfinite(mse.data).all()):
        raise ContractError("total loss of non-finite components")
    return margin + mse
