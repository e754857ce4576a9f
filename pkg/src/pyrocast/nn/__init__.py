"""Minimal reverse-mode differentiation engine used by every model here."""

from .init import fan_in_uniform, he_uniform, xavier_uniform, zeros
from .ops import (concat, conv2d, dense, leaky_relu, maxpool2, mse_loss,
                  narrow, relu, sigmoid, stack, tanh, upsample2)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, grad_enabled, no_grad, set_debug_checks

__all__ = [
    "Adam", "AdamState", "Tensor", "adam_step", "concat", "conv2d", "dense",
    "fan_in_uniform", "grad_enabled", "he_uniform", "leaky_relu", "maxpool2",
    "mse_loss", "narrow", "no_grad", "relu", "set_debug_checks", "sigmoid",
    "stack", "tanh", "upsample2", "xavier_uniform", "zeros",
]
