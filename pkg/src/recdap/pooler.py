"""Single-query attention pooling of the denoised positive and negative rows."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ContractError


class AttentionPooler:
    """MLP(MultiHeadAttention(q, X, X)) with one head and a learnable query."""

    def __init__(self, registry: nx.ParamRegistry, width: int, hidden: int | None = None,
                 slope: float = 0.01, prefix: str = "pooler"):
        hidden = hidden or width
        self.width = width
        self.slope = slope
        self.query = registry.create(f"{prefix}.query", (1, width))
        for name in ("q", "k", "v", "o"):
            setattr(self, f"W_{name}", registry.create(f"{prefix}.W_{name}", (width, width)))
            setattr(self, f"b_{name}", registry.create(f"{prefix}.b_{name}", (width,)))
        self.mlp_W1 = registry.create(f"{prefix}.mlp_W1", (hidden, width))
        self.mlp_b1 = registry.create(f"{prefix}.mlp_b1", (hidden,), fan_in=width)
        self.mlp_W2 = registry.create(f"{prefix}.mlp_W2", (width, hidden))
        self.mlp_b2 = registry.create(f"{prefix}.mlp_b2", (width,), fan_in=hidden)
        self.last_weights: np.ndarray | None = None

    def attention(self, X: nx.Tensor):
        """Returns (attended vector (batch, width), weights (batch, n))."""
        if X.ndim != 3 or X.shape[1] == 0:
            raise ContractError(f"attention pooling needs (batch, n>=1, width), got {X.shape}")
        q = nx.linear(self.query, self.W_q, self.b_q)  # (1, width)
        keys = nx.linear(X, self.W_k, self.b_k)
        values = nx.linear(X, self.W_v, self.b_v)
        logits = (keys * q.reshape(1, 1, self.width)).sum(axis=-1) * (1.0 / np.sqrt(self.width))
        weights = nx.softmax(logits, axis=-1)
        attended = (weights.reshape(*weights.shape, 1) * values).sum(axis=1)
        return nx.linear(attended, self.W_o, self.b_o), weights

    def mlp(self, x: nx.Tensor) -> nx.Tensor:
        h = nx.leaky_relu(nx.linear(x, self.mlp_W1, self.mlp_b1), self.slope)
        return nx.linear(h, self.mlp_W2, self.mlp_b2)

    def __call__(self, X: nx.Tensor) -> nx.Tensor:
        attended, weights = self.attention(X)
        self.last_weights = weights.data
        return self.mlp(attended)


def mean_pool(X: nx.Tensor) -> nx.Tensor:
    if X.ndim != 3 or X.shape[1] == 0:
        raise ContractError(f"mean pooling needs (batch, n>=1, width), got {X.shape}")
    return X.mean(axis=1)


def pool_pos_neg(z0_hat: nx.Tensor, k: int, pos_pool, neg_pool) -> nx.Tensor:
    """z = [pool_pos(rows[:k]); pool_neg(rows[k:])]."""
    if z0_hat.ndim != 3 or z0_hat.shape[1] != 2 * k:
        raise ContractError(f"expected 2k = {2 * k} rows, got shape {z0_hat.shape}")
    x_pos, x_neg = nx.split(z0_hat, [k, k], axis=1)
    return nx.concat([pos_pool(x_pos), neg_pool(x_neg)], axis=-1)
