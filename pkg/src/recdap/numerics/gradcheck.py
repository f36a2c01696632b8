"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import backward, no_grad


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    n_checked: int


@dataclass
class GradCheckReport:
    tolerance: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return all(c.max_rel_error < self.tolerance for c in self.checks)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.max_rel_error < self.tolerance else 'FAIL'} {c.name}: "
            f"max rel err {c.max_rel_error:.3e} over {c.n_checked} entries"
            for c in self.checks
        ]


def relative_error(analytic, numeric, floor: float = 1e-8):
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def check_gradients(
    forward_fn,
    registry,
    tolerance: float = 1e-3,
    step: float = 1e-5,
    max_entries: int | None = 16,
    seed: int = 0,
    names=None,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare backward() against central differences of ``forward_fn``.

    ``forward_fn`` takes no arguments and returns a scalar Tensor; it must be
    deterministic. At most ``max_entries`` coordinates per parameter are
    probed (all of them when None).
    """
    rng = np.random.default_rng(seed)
    loss = forward_fn()
    grads = {k: g.copy() for k, g in backward(loss, registry).items()}
    report = GradCheckReport(tolerance)
    for name in names if names is not None else registry.names():
        p = registry[name]
        flat = p.data.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(len(coords))
        with no_grad():
            for j, c in enumerate(coords):
                orig = flat[c]
                flat[c] = orig + step
                up = forward_fn().item()
                flat[c] = orig - step
                down = forward_fn().item()
                flat[c] = orig
                numeric[j] = (up - down) / (2 * step)
        analytic = grads[name].reshape(-1)[coords]
        err = relative_error(analytic, numeric, floor) if len(coords) else np.zeros(0)
        report.checks.append(ParamCheck(name, float(err.max(initial=0.0)), len(coords)))
    return report


def check_input_gradient(fn, x: np.ndarray, step: float = 1e-6, floor: float = 1e-8) -> float:
    """Max relative error of d(sum(fn(x)))/dx against central differences.

    ``fn`` maps a traced Tensor to a Tensor; used for per-primitive checks.
    """
    from .tensor import Tensor

    xt = Tensor(x.copy(), requires_grad=True)
    out = fn(xt).sum()
    backward(out)
    analytic = xt.grad.reshape(-1)
    numeric = np.empty_like(analytic)
    base = x.copy().reshape(-1)
    with no_grad():
        for i in range(base.size):
            orig = base[i]
            base[i] = orig + step
            up = fn(Tensor(base.reshape(x.shape))).data.sum()
            base[i] = orig - step
            down = fn(Tensor(base.reshape(x.shape))).data.sum()
            base[i] = orig
            numeric[i] = (up - down) / (2 * step)
    return float(relative_error(analytic, numeric, floor).max(initial=0.0))
