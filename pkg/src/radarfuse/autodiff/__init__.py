"""Minimal reverse-mode automatic differentiation in double precision."""
from .gradcheck import grad_check, numeric_gradient, relative_error
from .optim import AdamHyper, AdamState, optimizer_step
from .tensor import (
    AutodiffError,
    DomainError,
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    absolute,
    active_tape,
    add,
    as_tensor,
    atan2,
    clip,
    concat,
    exp,
    gather,
    log,
    matmul,
    max_over_set,
    mul,
    neg,
    power,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    smooth_l1,
    softmax,
    sub,
    transpose,
)

__all__ = [
    "AdamHyper",
    "AdamState",
    "AutodiffError",
    "DomainError",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "absolute",
    "active_tape",
    "add",
    "as_tensor",
    "atan2",
    "clip",
    "concat",
    "exp",
    "gather",
    "grad_check",
    "log",
    "matmul",
    "max_over_set",
    "mul",
    "neg",
    "numeric_gradient",
    "optimizer_step",
    "power",
    "reduce_mean",
    "reduce_sum",
    "relative_error",
    "relu",
    "reshape",
    "sigmoid",
    "smooth_l1",
    "softmax",
    "sub",
    "transpose",
]
