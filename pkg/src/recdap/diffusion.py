"""Relation-conditioned denoising diffusion over extended-support embeddings.

Each extended-support row ``[h'; t']`` is a token; the noise predictor is a
1-D U-Net over the row axis whose blocks are FiLM-modulated by a per-row
embedding of the condition ``[r'; z0_row; label]`` plus the timestep.
Timesteps are 1-based throughout: ``t`` in ``1..T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ContractError, DimensionError

POSITIVE = (1.0, 0.0)
NEGATIVE = (0.0, 1.0)


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    beta_start: float
    beta_end: float

    @property
    def T(self) -> int:
        return len(self.betas)

    def _check(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ContractError(f"timestep {t.tolist()} outside 1..{self.T}")
        return t - 1

    def beta(self, t):
        return self.betas[self._check(t)]

    def alpha(self, t):
        return self.alphas[self._check(t)]

    def alpha_bar(self, t):
        return self.alpha_bars[self._check(t)]

    def config(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end,
                "kind": "linear"}


def build_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    if T < 1 or not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(f"invalid schedule: T={T}, beta range [{beta_start}, {beta_end}]")
    betas = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    alphas = 1.0 - betas
    return DiffusionSchedule(betas, alphas, np.cumprod(alphas), beta_start, beta_end)


def _coef(values, ndim):
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def forward_sample(z0, t, eps, schedule: DiffusionSchedule):
    """Closed-form q(z_t | z_0): sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.

    ``t`` is a scalar or one timestep per leading (batch) entry. Tensor
    inputs give a Tensor result.
    """
    ab = schedule.alpha_bar(t)
    if isinstance(z0, nx.Tensor) or isinstance(eps, nx.Tensor):
        ndim = nx.as_tensor(z0).ndim
        return nx.as_tensor(z0) * _coef(np.sqrt(ab), ndim) + nx.as_tensor(eps) * _coef(np.sqrt(1 - ab), ndim)
    z0 = np.asarray(z0, dtype=np.float64)
    return _coef(np.sqrt(ab), z0.ndim) * z0 + _coef(np.sqrt(1 - ab), z0.ndim) * np.asarray(eps)


def forward_step(z_prev: np.ndarray, t: int, eps: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """One Markov step of q(z_t | z_{t-1})."""
    beta = schedule.beta(t)
    return np.sqrt(1.0 - beta) * z_prev + np.sqrt(beta) * eps


def padded_length(n_rows: int, minimum: int = 8, multiple: int = 4) -> int:
    """Sequence length after zero-padding: next multiple of 4, at least 8."""
    return max(minimum, -(-n_rows // multiple) * multiple)


def row_mask(n_rows: int, length: int) -> np.ndarray:
    mask = np.zeros((1, length, 1))
    mask[:, :n_rows] = 1.0
    return mask


def build_condition(r_rel: nx.Tensor, z0: nx.Tensor, labels) -> nx.Tensor:
    """Per-row condition ``[r'; z0_row; label]`` of width d + 2d + 2.

    ``labels`` holds 1 for positive and 0 for negative rows (positives first);
    ``None`` zeroes the label bits.
    """
    bsz, n, _ = z0.shape
    if labels is None:
        onehot = np.zeros((bsz, n, 2))
    else:
        labels = np.asarray(labels)
        if labels.shape[-1] != n:
            raise ContractError(f"{labels.shape[-1]} labels for {n} condition rows")
        flat = labels.reshape(-1, n)
        if np.any(np.diff(flat, axis=-1) > 0):
            raise ContractError("labels must list positives before negatives")
        lab = np.broadcast_to(labels, (bsz, n)).astype(np.float64)
        onehot = np.stack([lab, 1.0 - lab], axis=-1)
    r_rows = nx.repeat(r_rel.reshape(bsz, 1, r_rel.shape[-1]), n, axis=1)
    return nx.concat([r_rows, z0, nx.Tensor(onehot)], axis=-1)


def split_condition(cond, rel_dim: int):
    cond = nx.as_tensor(cond)
    return nx.split(cond, [rel_dim, cond.shape[-1] - rel_dim - 2, 2], axis=-1)


def timestep_embedding(t, width: int = 64) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def film(features: nx.Tensor, scale: nx.Tensor, shift: nx.Tensor) -> nx.Tensor:
    return features * (scale + 1.0) + shift


class _Block:
    def __init__(self, registry, name, cin, cout, embed, kernel, stride):
        self.stride = stride
        self.W = registry.create(f"{name}.conv_W", (cout, kernel, cin), fan_in=kernel * cin)
        self.b = registry.create(f"{name}.conv_b", (cout,), fan_in=kernel * cin)
        self.film_W = registry.create(f"{name}.film_W", (2 * cout, embed))
        self.film_b = registry.create(f"{name}.film_b", (2 * cout,), fan_in=embed)
        self.cout = cout

    def __call__(self, x, emb):
        h = nx.conv1d(x, self.W, self.b, self.stride)
        scale, shift = nx.split(nx.linear(emb, self.film_W, self.film_b), [self.cout, self.cout], axis=-1)
        return nx.silu(film(h, scale, shift))


def _downsample(emb: nx.Tensor, factor: int) -> nx.Tensor:
    bsz, length, width = emb.shape
    return emb.reshape(bsz, length // factor, factor, width).mean(axis=2)


class NoisePredictor:
    """FiLM-conditioned 1-D U-Net: two stride-2 stages down, two up with skips."""

    def __init__(self, registry: nx.ParamRegistry, data_width: int, cond_width: int,
                 channels=(64, 128, 256), time_width: int = 64, embed_width: int = 128,
                 kernel: int = 3, prefix: str = "diffusion.unet"):
        c1, c2, c3 = channels
        self.data_width = data_width
        self.cond_width = cond_width
        self.time_width = time_width
        self.cond_W = registry.create(f"{prefix}.cond_W", (embed_width, cond_width))
        self.cond_b = registry.create(f"{prefix}.cond_b", (embed_width,), fan_in=cond_width)
        self.time_W = registry.create(f"{prefix}.time_W", (embed_width, time_width))
        self.time_b = registry.create(f"{prefix}.time_b", (embed_width,), fan_in=time_width)
        self.inp = _Block(registry, f"{prefix}.in", data_width, c1, embed_width, kernel, 1)
        self.down1 = _Block(registry, f"{prefix}.down1", c1, c2, embed_width, kernel, 2)
        self.down2 = _Block(registry, f"{prefix}.down2", c2, c3, embed_width, kernel, 2)
        self.mid = _Block(registry, f"{prefix}.mid", c3, c3, embed_width, kernel, 1)
        self.up1 = _Block(registry, f"{prefix}.up1", c3 + c2, c2, embed_width, kernel, 1)
        self.up2 = _Block(registry, f"{prefix}.up2", c2 + c1, c1, embed_width, kernel, 1)
        self.out_W = registry.create(f"{prefix}.out_W", (data_width, 1, c1), fan_in=c1)
        self.out_b = registry.create(f"{prefix}.out_b", (data_width,), fan_in=c1)

    def predict_noise(self, z_t, t, cond) -> nx.Tensor:
        z_t, cond = nx.as_tensor(z_t), nx.as_tensor(cond)
        if z_t.ndim != 3 or z_t.shape[2] != self.data_width:
            raise DimensionError(f"noise predictor input shape {z_t.shape}, expected (batch, L, {self.data_width})")
        bsz, length, _ = z_t.shape
        if length % 4 != 0:
            raise DimensionError(f"sequence length {length} must be padded to a multiple of 4")
        if cond.shape != (bsz, length, self.cond_width):
            raise DimensionError(f"condition shape {cond.shape}, expected {(bsz, length, self.cond_width)}")
        t = np.broadcast_to(np.asarray(t), (bsz,))
        temb = nx.linear(nx.Tensor(timestep_embedding(t, self.time_width)), self.time_W, self.time_b)
        emb = nx.silu(nx.linear(cond, self.cond_W, self.cond_b) + temb.reshape(bsz, 1, -1))
        emb2 = _downsample(emb, 2)
        emb4 = _downsample(emb, 4)
        h1 = self.inp(z_t, emb)
        h2 = self.down1(h1, emb2)
        h3 = self.down2(h2, emb4)
        h4 = self.mid(h3, emb4)
        h5 = self.up1(nx.concat([nx.repeat(h4, 2, axis=1), h2], axis=-1), emb2)
        h6 = self.up2(nx.concat([nx.repeat(h5, 2, axis=1), h1], axis=-1), emb)
        return nx.conv1d(h6, self.out_W, self.out_b)

    def __call__(self, z_t: np.ndarray, t, cond: np.ndarray) -> np.ndarray:
        with nx.no_grad():
            return self.predict_noise(z_t, t, cond).data


def posterior_mean(z_t, t: int, eps_hat, schedule: DiffusionSchedule):
    """mu = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)."""
    beta, alpha, ab = schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t)
    return (z_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(alpha)


def reverse_step(z_t: np.ndarray, t: int, cond, schedule: DiffusionSchedule,
                 rng: np.random.Generator, predictor, mask: np.ndarray | None = None) -> np.ndarray:
    """Draw z_{t-1} ~ N(mu, beta_t I); at t = 1 return the mean."""
    mu = posterior_mean(z_t, t, predictor(z_t, t, cond), schedule)
    if t > 1:
        mu = mu + np.sqrt(schedule.beta(t)) * rng.standard_normal(z_t.shape)
    return mu if mask is None else mu * mask


def sample(shape, cond, schedule: DiffusionSchedule, rng: np.random.Generator, predictor,
           n_rows: int | None = None) -> np.ndarray:
    """Ancestral sampling from z_T ~ N(0, I); padded rows are held at zero and dropped."""
    bsz, length, width = shape
    n_rows = length if n_rows is None else n_rows
    mask = row_mask(n_rows, length)
    z = rng.standard_normal((bsz, length, width)) * mask
    for t in range(schedule.T, 0, -1):
        z = reverse_step(z, t, cond, schedule, rng, predictor, mask)
    return z[:, :n_rows]


@dataclass
class DiffusionLoss:
    loss: nx.Tensor
    t: np.ndarray
    eps: np.ndarray
    z_t: nx.Tensor
    eps_hat: nx.Tensor
    z0_hat: nx.Tensor  # one-step estimate, unpadded


def diffusion_loss(z0: nx.Tensor, cond: nx.Tensor, schedule: DiffusionSchedule,
                   rng: np.random.Generator, predictor: NoisePredictor,
                   t=None, eps=None) -> DiffusionLoss:
    """Mean over real rows of ||eps_theta(z_t, t, c) - eps||^2.

    ``t`` (one per batch element) and ``eps`` are drawn from ``rng`` unless
    given; padding rows carry no noise and are excluded from the mean.
    """
    z0, cond = nx.as_tensor(z0), nx.as_tensor(cond)
    bsz, n, width = z0.shape
    length = padded_length(n)
    mask = row_mask(n, length)
    if t is None:
        t = rng.integers(1, schedule.T + 1, size=bsz)
    t = np.broadcast_to(np.asarray(t), (bsz,)).copy()
    if eps is None:
        eps = rng.standard_normal((bsz, length, width))
    eps = np.asarray(eps) * mask
    z0p = nx.pad_axis(z0, 1, 0, length - n)
    condp = nx.pad_axis(cond, 1, 0, length - n)
    z_t = forward_sample(z0p, t, eps, schedule)
    eps_hat = predictor.predict_noise(z_t, t, condp)
    diff = (eps_hat - eps) * mask
    loss = (diff * diff).sum() * (1.0 / (bsz * n))
    ab = _coef(schedule.alpha_bar(t), 3)
    z0_hat = (z_t - eps_hat * np.sqrt(1.0 - ab)) * (1.0 / np.sqrt(ab))
    return DiffusionLoss(loss, t, eps, z_t, eps_hat, z0_hat[:, :n, :])
