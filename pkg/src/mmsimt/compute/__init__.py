"""Minimal reverse-mode differentiable tensor core."""

from .gradcheck import gradcheck, numerical_gradient, relative_error
from .ops import (
    LAYER_NORM_EPS,
    add,
    additive_attention,
    cross_entropy,
    dropout,
    embedding,
    gru_cell,
    layer_norm,
    log_softmax,
    matmul,
    mul,
    pointwise,
    scale,
    scaled_dot_attention,
    sigmoid,
    softmax,
    stack,
    sub,
    tanh,
    total,
    transpose,
)
from .optim import Adam, AdamState, adam_step, clip_global_norm
from .tensor import Tensor, default_dtype, grad_enabled, no_grad, precision, topological_order

__all__ = [
    "Adam", "AdamState", "LAYER_NORM_EPS", "Tensor", "adam_step", "add", "additive_attention",
    "clip_global_norm", "cross_entropy", "default_dtype", "dropout", "embedding", "grad_enabled",
    "gradcheck", "gru_cell", "layer_norm", "log_softmax", "matmul", "mul", "no_grad",
    "numerical_gradient", "pointwise", "precision", "relative_error", "scale",
    "scaled_dot_attention", "sigmoid", "softmax", "stack", "sub", "tanh", "topological_order",
    "total", "transpose",
]
