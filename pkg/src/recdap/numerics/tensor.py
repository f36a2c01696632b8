"""Dense float64 tensors with reverse-mode differentiation.

Every op builds its output eagerly and, when any input is traced, records a
closure mapping the output gradient to input gradients. ``backward`` walks the
resulting graph in reverse topological order. Nothing persists between forward
passes except the leaf parameters themselves.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from ..errors import ContractError, DimensionError, DomainError
from . import kernels

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("__weakref__", "_backward", "_parents", "data", "grad", "name", "requires_grad")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise --------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _make(
        a.data**exponent,
        (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1),),
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return _make(y, (a,), lambda g: (g * 0.5 / y,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data >= 0, 1.0, slope)
    return _make(a.data * factor, (a,), lambda g: (g * factor,))


def relu(a) -> Tensor:
    return leaky_relu(a, 0.0)


def silu(a) -> Tensor:
    a = as_tensor(a)
    return mul(a, sigmoid(a))


# reductions and shape ------------------------------------------------------
def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(y, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swapaxes(a, ax1, ax2) -> Tensor:
    axes = list(range(as_tensor(a).ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), backward)


def take_rows(a, index) -> Tensor:
    """Gather rows ``a[index]`` of a 2-D tensor; gradient scatters back."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    if a.ndim != 2:
        raise DimensionError(f"take_rows expects a 2-D tensor, got shape {a.shape}")
    flat = index.reshape(-1)
    out = a.data[flat].reshape(index.shape + (a.shape[1],))

    def backward(g):
        return (kernels.scatter_add_rows(g.reshape(-1, a.shape[1]), flat, a.shape[0]),)

    return _make(out, (a,), backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty list")
    ref = tensors[0].shape
    nd = len(ref)
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != ref[i] for i in range(nd) if i != ax):
            raise DimensionError(
                f"concat along axis {axis}: shapes {ref} and {t.shape} disagree off-axis"
            )
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def split(a, sizes, axis=-1) -> list[Tensor]:
    a = as_tensor(a)
    ax = axis % a.ndim
    if sum(sizes) != a.shape[ax]:
        raise DimensionError(f"split sizes {list(sizes)} do not sum to extent {a.shape[ax]}")
    out = []
    start = 0
    for n in sizes:
        idx = [slice(None)] * a.ndim
        idx[ax] = slice(start, start + n)
        out.append(getitem(a, tuple(idx)))
        start += n
    return out


def pad_axis(a, axis, before, after) -> Tensor:
    """Zero-pad one axis."""
    a = as_tensor(a)
    ax = axis % a.ndim
    widths = [(0, 0)] * a.ndim
    widths[ax] = (before, after)
    sl = [slice(None)] * a.ndim
    sl[ax] = slice(before, before + a.shape[ax])
    sl = tuple(sl)
    return _make(np.pad(a.data, widths), (a,), lambda g: (g[sl],))


def repeat(a, repeats: int, axis) -> Tensor:
    a = as_tensor(a)
    ax = axis % a.ndim

    def backward(g):
        shape = a.shape[:ax] + (a.shape[ax], repeats) + a.shape[ax + 1 :]
        return (g.reshape(shape).sum(axis=ax + 1),)

    return _make(np.repeat(a.data, repeats, axis=ax), (a,), backward)


# linear algebra -------------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


def linear(x, W, b=None) -> Tensor:
    """y = x Wᵀ (+ b) over the last axis of ``x``."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear: input shape {x.shape} incompatible with weight shape {W.shape}")
    parents = [x, W]
    y = x.data @ W.data.T
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"linear: bias shape {b.shape} does not match weight shape {W.shape}")
        y = y + b.data
        parents.append(b)

    def backward(g):
        g2 = g.reshape(-1, W.shape[0])
        x2 = x.data.reshape(-1, W.shape[1])
        grads = [(g2 @ W.data).reshape(x.shape), g2.T @ x2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _make(y, parents, backward)


def conv1d(x, W, b=None, stride: int = 1) -> Tensor:
    """Same-padded 1-D convolution over axis 1 of ``x`` (batch, length, channels).

    ``W`` has shape (out_channels, kernel, in_channels); the kernel must be odd.
    """
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 3 or W.ndim != 3 or x.shape[2] != W.shape[2]:
        raise DimensionError(f"conv1d: input shape {x.shape} incompatible with weight shape {W.shape}")
    cout, ksize, cin = W.shape
    if ksize % 2 != 1:
        raise DimensionError(f"conv1d kernel must be odd, got {ksize}")
    bsz, length, _ = x.shape
    half = ksize // 2
    xp = np.pad(x.data, ((0, 0), (half, half), (0, 0)))
    starts = np.arange(0, length, stride)
    lout = len(starts)
    # cols[b, l, k, c] = xp[b, starts[l] + k, c]
    gather = starts[:, None] + np.arange(ksize)[None, :]
    cols = xp[:, gather, :].reshape(bsz * lout, ksize * cin)
    Wm = W.data.reshape(cout, ksize * cin)
    y = (cols @ Wm.T).reshape(bsz, lout, cout)
    parents = [x, W]
    if b is not None:
        b = as_tensor(b)
        y = y + b.data
        parents.append(b)

    def backward(g):
        g2 = g.reshape(bsz * lout, cout)
        gW = (g2.T @ cols).reshape(W.shape)
        gcols = (g2 @ Wm).reshape(bsz, lout, ksize, cin)
        gxp = np.zeros_like(xp)
        for k in range(ksize):
            gxp[:, starts + k, :] += gcols[:, :, k, :]
        grads = [gxp[:, half : half + length, :], gW]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _make(y, parents, backward)


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DomainError(f"softmax over an empty axis (shape {a.shape}, axis {axis})")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    ez = np.exp(z)
    y = ez / ez.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (a,), backward)


def norm(a, axis=-1) -> Tensor:
    """Euclidean norm over ``axis``; the gradient at the origin is taken as zero."""
    a = as_tensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=axis))

    def backward(g):
        nk = np.expand_dims(n, axis)
        safe = np.where(nk > 0, nk, 1.0)
        return (np.where(nk > 0, a.data / safe, 0.0) * np.expand_dims(g, axis),)

    return _make(n, (a,), backward)


def segment_sum(values, segment, num_segments: int) -> Tensor:
    """Sum rows of a 2-D tensor into ``num_segments`` buckets."""
    values = as_tensor(values)
    segment = np.asarray(segment, dtype=np.int64)
    if values.ndim != 2:
        raise DimensionError(f"segment_sum expects 2-D values, got {values.shape}")
    out = kernels.scatter_add_rows(values.data, segment, num_segments)
    return _make(out, (values,), lambda g: (g[segment],))


def segment_softmax(scores, segment, num_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each segment."""
    scores = as_tensor(scores)
    segment = np.asarray(segment, dtype=np.int64)
    if scores.ndim != 1:
        raise DimensionError(f"segment_softmax expects 1-D scores, got {scores.shape}")
    y = kernels.segment_softmax(scores.data, segment, num_segments)
    return _make(
        y,
        (scores,),
        lambda g: (kernels.segment_softmax_backward(y, g, segment, num_segments),),
    )


# differentiation ------------------------------------------------------------
def _topological(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, registry=None) -> dict:
    """Propagate d(loss)/d(leaf) through the recorded graph.

    Leaf tensors get ``.grad`` set. With a registry, every registered parameter
    receives a gradient (zeros if the loss does not depend on it) and the
    mapping ``name -> gradient`` is returned.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if registry is not None:
        for p in registry.values():
            p.grad = None
    grads = {id(loss): np.ones(loss.shape)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if registry is None:
        return {}
    out = {}
    for name, p in registry.items():
        if p.grad is None:
            p.grad = np.zeros(p.shape)
        out[name] = p.grad
    return out
