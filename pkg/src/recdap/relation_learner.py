"""Bi-LSTM relation learner with attention pooling of hidden states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ContractError


@dataclass
class LSTMCellParams:
    W_ih: nx.Tensor  # (4m, input)
    W_hh: nx.Tensor  # (4m, m)
    b: nx.Tensor  # (4m,)

    @property
    def hidden(self) -> int:
        return self.W_hh.shape[1]

    @classmethod
    def create(cls, registry: nx.ParamRegistry, prefix: str, input_dim: int, hidden: int):
        return cls(
            registry.create(f"{prefix}.W_ih", (4 * hidden, input_dim)),
            registry.create(f"{prefix}.W_hh", (4 * hidden, hidden)),
            registry.create(f"{prefix}.b", (4 * hidden,), fan_in=hidden),
        )


def lstm_cell(x: nx.Tensor, h_prev: nx.Tensor, c_prev: nx.Tensor, p: LSTMCellParams):
    """One LSTM step; gate order (input, forget, candidate, output)."""
    gates = nx.linear(x, p.W_ih, p.b) + nx.linear(h_prev, p.W_hh)
    i, f, g, o = nx.split(gates, [p.hidden] * 4, axis=-1)
    c = nx.sigmoid(f) * c_prev + nx.sigmoid(i) * nx.tanh(g)
    h = nx.sigmoid(o) * nx.tanh(c)
    return h, c


def run_lstm(xs: nx.Tensor, p: LSTMCellParams, reverse: bool = False) -> list[nx.Tensor]:
    """Run over axis 1 of (batch, steps, input); returns states in step order."""
    bsz, steps, _ = xs.shape
    h = nx.Tensor(np.zeros((bsz, p.hidden)))
    c = nx.Tensor(np.zeros((bsz, p.hidden)))
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    out: list = [None] * steps
    for t in order:
        h, c = lstm_cell(xs[:, t, :], h, c, p)
        out[t] = h
    return out


class RelationLearner:
    def __init__(self, registry: nx.ParamRegistry, input_dim: int, hidden: int, out_dim: int,
                 prefix: str = "relation"):
        self.hidden = hidden
        self.fwd = LSTMCellParams.create(registry, f"{prefix}.fwd", input_dim, hidden)
        self.bwd = LSTMCellParams.create(registry, f"{prefix}.bwd", input_dim, hidden)
        self.w = registry.create(f"{prefix}.attn_w", (1, 2 * hidden))
        self.W_out = registry.create(f"{prefix}.W_out", (out_dim, 2 * hidden))

    def encode_support(self, z0_pos: nx.Tensor) -> nx.Tensor:
        """(batch, k, 2d) -> hidden states (batch, k, 2m)."""
        if z0_pos.ndim != 3 or z0_pos.shape[1] == 0:
            raise ContractError(f"encode_support needs (batch, k>=1, width), got {z0_pos.shape}")
        fwd = run_lstm(z0_pos, self.fwd)
        bwd = run_lstm(z0_pos, self.bwd, reverse=True)
        k = z0_pos.shape[1]
        steps = [nx.concat([fwd[t], bwd[t]], axis=-1).reshape(-1, 1, 2 * self.hidden) for t in range(k)]
        return nx.concat(steps, axis=1)

    def attention(self, hidden: nx.Tensor) -> nx.Tensor:
        return nx.softmax(nx.linear(hidden, self.w).reshape(hidden.shape[:2]), axis=1)

    def pool_relation(self, hidden: nx.Tensor) -> nx.Tensor:
        """r' = W_out(sum_t gamma_t h_t) with gamma = softmax(w . h_t)."""
        gamma = self.attention(hidden)
        pooled = (gamma.reshape(*gamma.shape, 1) * hidden).sum(axis=1)
        return nx.linear(pooled, self.W_out)

    def __call__(self, z0_pos: nx.Tensor) -> nx.Tensor:
        return self.pool_relation(self.encode_support(z0_pos))
