from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class ParamRegistry:
    """Named trainable tensors in creation order."""

    def __init__(self, seed: int = 0):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self._params)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __iter__(self):
        return iter(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self):
        return list(self._params)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ContractError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def create(self, name: str, shape, fan_in: int | None = None) -> Tensor:
        """Register a parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        shape = tuple(shape)
        if fan_in is None:
            fan_in = shape[-1] if shape else 1
        return self.add(name, uniform_init(self.rng, shape, fan_in))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(tuple(shape)))

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def state_dict(self) -> OrderedDict:
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_state_dict(self, state, strict: bool = True):
        for name, p in self._params.items():
            if name not in state:
                if strict:
                    raise ContractError(f"missing parameter {name!r} in state")
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ContractError(f"parameter {name!r}: shape {value.shape} != {p.shape}")
            p.data = value.copy()
        if strict:
            extra = set(state) - set(self._params)
            if extra:
                raise ContractError(f"unexpected parameters in state: {sorted(extra)}")

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None
