"""Adam optimizer with bias-corrected first and second moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moment buffers and the shared step counter."""

    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place Adam update of ``param``.

    The very first update with a constant gradient g moves the parameter by
    almost exactly lr * sign(g): both bias corrections cancel at step 1.
    """
    if not np.all(np.isfinite(grad)):
        raise NumericError("adam_step received a non-finite gradient")
    if state.m is None:
        state.m = np.zeros_like(param)
        state.v = np.zeros_like(param)
    state.step += 1
    state.m += (1.0 - beta1) * (grad - state.m)
    state.v += (1.0 - beta2) * (grad * grad - state.v)
    mhat = state.m / (1.0 - beta1 ** state.step)
    vhat = state.v / (1.0 - beta2 ** state.step)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


@dataclass
class Adam:
    """Adam over a list of parameter tensors."""

    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(init=False)

    def __post_init__(self) -> None:
        self.states = [AdamState() for _ in self.params]

    def step(self) -> None:
        """Apply one update to every parameter with a gradient."""
        for p, st in zip(self.params, self.states):
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, st, lr=self.lr, beta1=self.beta1,
                      beta2=self.beta2, eps=self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
