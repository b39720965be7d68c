"""Minimal neural-network layers with explicit forward/backward passes."""

from .layers import (
    BatchNorm1d,
    BatchNorm2d,
    Conv2d,
    Flatten,
    LayerNorm,
    Layer,
    Linear,
    Parameter,
    ReLU,
    Sequential,
    Tanh,
    orthogonal_matrix,
)
from .optim import SGD, Adam, clip_grad_norm, global_grad_norm, make_optimizer, zero_grad

__all__ = [
    "Adam",
    "BatchNorm1d",
    "BatchNorm2d",
    "Conv2d",
    "Flatten",
    "Layer",
    "LayerNorm",
    "Linear",
    "Parameter",
    "ReLU",
    "SGD",
    "Sequential",
    "Tanh",
    "clip_grad_norm",
    "global_grad_norm",
    "make_optimizer",
    "orthogonal_matrix",
    "zero_grad",
]
