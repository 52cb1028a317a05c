"""Reverse-mode tensor engine: tensors, tape, ops, optimizer, gradcheck."""

from .tensor import (
    Tape,
    Tensor,
    active_tape,
    default_dtype,
    float_width,
    set_float_width,
    zero_grads,
)
from . import ops  # noqa: F401  (wires Tensor operator overloads)
from .ops import (
    RunningStats,
    add,
    affine,
    batch_norm,
    clamp,
    concat_channels,
    conv2d,
    dropout,
    leaky_relu,
    log,
    mean_all,
    min_pool_channels_window,
    mul,
    reduce_l1,
    reduce_l2sq,
    sigmoid,
    sub,
    sum_all,
    tanh,
    transposed_conv2d,
)
from .optim import Parameter, adam_step
from .gradcheck import GradCheckReport, gradcheck, gradcheck_report

__all__ = [
    "GradCheckReport",
    "Parameter",
    "RunningStats",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "add",
    "affine",
    "batch_norm",
    "clamp",
    "concat_channels",
    "conv2d",
    "default_dtype",
    "dropout",
    "float_width",
    "gradcheck",
    "gradcheck_report",
    "leaky_relu",
    "log",
    "mean_all",
    "min_pool_channels_window",
    "mul",
    "reduce_l1",
    "reduce_l2sq",
    "set_float_width",
    "sigmoid",
    "sub",
    "sum_all",
    "tanh",
    "transposed_conv2d",
    "zero_grads",
]
