"""Dense float64 tensors, reverse-mode differentiation and gradient checking."""

from . import kernels
from .gradcheck import (
    GradCheckReport,
    check_gradients,
    check_input_gradient,
    relative_error,
)
from .params import ParamRegistry, uniform_init
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv1d,
    div,
    exp,
    getitem,
    grad_enabled,
    leaky_relu,
    linear,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    norm,
    pad_axis,
    power,
    relu,
    repeat,
    reshape,
    segment_softmax,
    segment_sum,
    sigmoid,
    silu,
    softmax,
    split,
    sqrt,
    sub,
    swapaxes,
    take_rows,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "GradCheckReport",
    "ParamRegistry",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "check_gradients",
    "check_input_gradient",
    "concat",
    "conv1d",
    "div",
    "exp",
    "getitem",
    "grad_enabled",
    "kernels",
    "leaky_relu",
    "linear",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "norm",
    "pad_axis",
    "power",
    "relative_error",
    "relu",
    "repeat",
    "reshape",
    "segment_softmax",
    "segment_sum",
    "sigmoid",
    "silu",
    "softmax",
    "split",
    "sqrt",
    "sub",
    "swapaxes",
    "take_rows",
    "tanh",
    "transpose",
    "tsum",
    "uniform_init",
]
