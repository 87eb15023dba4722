"""Float64 tensor engine: reverse-mode autodiff, parameter stores and Adam."""

from .adam import AdamState, OptimizerStateError, adam_step
from .nn import MLP, truncated_normal, xavier_uniform
from .store import CheckpointError, ParameterStore, load_arrays, save_arrays
from .tensor import (
    DimensionError,
    DomainError,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    div,
    einsum,
    embedding,
    embedding_bag,
    exp,
    index,
    log,
    matmul,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    sqrt,
    square,
    sub,
    take,
    tanh,
    tmean,
    tsum,
)

__all__ = [
    "AdamState", "CheckpointError", "DimensionError", "DomainError", "MLP",
    "OptimizerStateError", "ParameterStore", "Tensor", "adam_step", "add",
    "as_tensor", "backward", "clip", "concat", "div", "einsum", "embedding",
    "embedding_bag", "exp", "index", "load_arrays", "log", "matmul", "mul",
    "neg", "relu", "reshape", "save_arrays", "sigmoid", "sqrt", "square", "sub",
    "take", "tanh", "tmean", "truncated_normal", "tsum", "xavier_uniform",
]
