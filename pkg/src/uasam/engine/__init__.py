"""Numerics core: tensors, autodiff, RNG, optimizer, checkpoints."""

from . import kernels
from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .gradcheck import GradCheckResult, grad_check
from .optim import Adam
from .params import ParamStore
from .rng import Rng
from .tensor import (
    OPS,
    Tensor,
    backward,
    broadcast_to,
    clamp,
    concat,
    conv2d,
    exp,
    forward_op,
    gelu,
    layer_norm,
    log,
    matmul,
    mean,
    no_grad,
    relu,
    reset_tape,
    reshape,
    sigmoid,
    slice_,
    softmax,
    softplus,
    sum_,
    tape_size,
    transpose,
)

__all__ = [
    "Adam",
    "GradCheckResult",
    "OPS",
    "ParamStore",
    "Rng",
    "Tensor",
    "backward",
    "broadcast_to",
    "clamp",
    "concat",
    "conv2d",
    "exp",
    "forward_op",
    "gelu",
    "grad_check",
    "kernels",
    "layer_norm",
    "load_checkpoint",
    "log",
    "matmul",
    "mean",
    "no_grad",
    "read_header",
    "relu",
    "reset_tape",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "slice_",
    "softmax",
    "softplus",
    "sum_",
    "tape_size",
    "transpose",
]
