"""Shared mini-batch training loop with early stopping on a holdout split.

Every model here trains the same way: Adam on MSE, a seeded 80/20 split of
the sample axis, and restoration of the parameters that scored best on the
holdout.  The loop only sees a callable mapping sample indices to a scalar
loss tensor, so it works for autoencoders and sequence models alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import TrainingError
from .nn import Adam, Tensor, no_grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 10
    holdout_fraction: float = 0.2
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    holdout_loss: float
    improved: bool


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf

    def best_sequence(self) -> list[float]:
        """Holdout losses at each improvement, in order."""
        return [r.holdout_loss for r in self.records if r.improved]

    @property
    def epochs_run(self) -> int:
        return len(self.records)


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        p.data = snap[name].copy()


def fit_minibatch(params: dict[str, Tensor],
                  loss_on: Callable[[np.ndarray], Tensor],
                  n_samples: int,
                  config: TrainConfig,
                  early_stop: bool = True) -> TrainingHistory:
    """Train ``params`` in place; returns the per-epoch history.

    ``loss_on`` must return a scalar loss tensor for the given sample
    indices.  With ``early_stop`` off the loop runs exactly ``epochs``
    epochs and keeps the final parameters (used by fine-tuning).
    """
    if n_samples < 1:
        raise TrainingError("no training samples")
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    indices = rng.permutation(n_samples)
    n_hold = int(round(config.holdout_fraction * n_samples))
    if not early_stop or n_hold < 1 or n_samples - n_hold < 1:
        train_idx, hold_idx = indices, indices
    else:
        hold_idx, train_idx = indices[:n_hold], indices[n_hold:]

    opt = Adam(list(params.values()), lr=config.lr)
    history = TrainingHistory()
    best_snap = _snapshot(params)
    bad_epochs = 0
    for epoch in range(config.epochs):
        order = rng.permutation(train_idx)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            loss = loss_on(batch)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"training loss diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            total += value * len(batch)
        train_loss = total / len(order)
        with no_grad():
            holdout_loss = loss_on(hold_idx).item()
        if not math.isfinite(holdout_loss):
            raise TrainingError(f"holdout loss diverged at epoch {epoch}")
        improved = holdout_loss < history.best_loss
        if improved:
            history.best_loss = holdout_loss
            history.best_epoch = epoch
            best_snap = _snapshot(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
        history.records.append(
            EpochRecord(epoch, train_loss, holdout_loss, improved))
        if early_stop and bad_epochs >= config.patience:
            break
    if early_stop:
        _restore(params, best_snap)
    return history
