"""Minimal dense-tensor numerics with reverse-mode gradients."""

from .checkpoint import load_checkpoint, save_checkpoint
from .lstm import LstmLayer, StackedLstm
from .ops import (
    BatchNorm2d,
    Conv2d,
    Linear,
    PoolSelectionCache,
    conv2d,
    dropout,
    maxpool2d,
    softmax_xent,
    xavier_uniform_init,
)
from .optim import Adam, Sgd, make_optimizer, zero_grads
from .tensor import (
    Tensor,
    add,
    concat,
    gather_steps,
    matmul,
    mul,
    narrow,
    no_grad,
    parameter,
    reshape,
    sigmoid,
    tanh,
)

__all__ = [
    "Tensor",
    "no_grad",
    "parameter",
    "add",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "concat",
    "narrow",
    "reshape",
    "gather_steps",
    "conv2d",
    "maxpool2d",
    "PoolSelectionCache",
    "dropout",
    "softmax_xent",
    "xavier_uniform_init",
    "Conv2d",
    "BatchNorm2d",
    "Linear",
    "LstmLayer",
    "StackedLstm",
    "Sgd",
    "Adam",
    "make_optimizer",
    "zero_grads",
    "save_checkpoint",
    "load_checkpoint",
]
