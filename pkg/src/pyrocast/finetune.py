"""Brief adaptation of trained surrogates to an out-of-distribution run.

Both entry points take the first five years (60 monthly snapshots) of the
new run, rebuild stride-1 windows from them, and run a fixed number of
epochs at a tenth of the original learning rate with no early stopping.
The ConvLSTM updates every parameter; the latent surrogate updates only the
sequence model while its field encoders stay frozen.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .convlstm import ConvLstmModel
from .errors import ConfigError, DimensionError
from .fields import VARIABLES, LandMask
from .latentdyn import Seq2SeqModel
from .training import TrainConfig, TrainingHistory, fit_minibatch

ADAPT_SNAPSHOTS = 60
FINETUNE_EPOCHS = 30
LR_SCALE = 0.1


def _check_length(series: dict[str, np.ndarray], variables: tuple[str, ...],
                  p: int, n: int, allow_any_length: bool) -> int:
    lengths = set()
    for v in variables:
        if v not in series:
            raise ConfigError(f"adaptation data is missing variable {v!r}")
        lengths.add(np.asarray(series[v]).shape[0])
    if len(lengths) != 1:
        raise DimensionError(f"variable series lengths differ: {sorted(lengths)}")
    (length,) = lengths
    if length != ADAPT_SNAPSHOTS and not allow_any_length:
        raise ConfigError(
            f"fine-tuning expects exactly {ADAPT_SNAPSHOTS} snapshots, got "
            f"{length}; pass allow_any_length to override")
    if length < p + n:
        raise DimensionError(
            f"{length} snapshots cannot form a single {p}+{n} window")
    return length


def _windows(stacked: np.ndarray, p: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Stride-1 (input, target) pairs from a (T, ...) stack."""
    t = stacked.shape[0]
    starts = range(t - p - n + 1)
    inputs = np.stack([stacked[s:s + p] for s in starts])
    targets = np.stack([stacked[s + p:s + p + n] for s in starts])
    return inputs, targets


def _finetune_lr(meta: dict, lr: float | None) -> float:
    if lr is not None:
        return lr
    return LR_SCALE * float(meta.get("train_lr", 1e-3))


def finetune_convlstm(model: ConvLstmModel, series: dict[str, np.ndarray],
                      epochs: int = FINETUNE_EPOCHS, lr: float | None = None,
                      batch_size: int = 8, seed: int = 0,
                      allow_any_length: bool = False,
                      mask: LandMask | None = None,
                      ) -> tuple[ConvLstmModel, TrainingHistory]:
    """Adapt every ConvLSTM parameter; the input model is left untouched."""
    variables = VARIABLES if model.mode == "joint" else (VARIABLES[0],)
    _check_length(series, variables, model.p, model.n, allow_any_length)
    stacked = np.stack([np.asarray(series[v], np.float32) for v in variables],
                       axis=1)
    inputs, targets = _windows(stacked, model.p, model.n)
    land = None
    if mask is not None:
        land = mask.land.astype(np.float32)
        targets = np.where(mask.land, targets, np.float32(0.0))
    tuned = ConvLstmModel.from_checkpoint(model.to_checkpoint())
    rate = _finetune_lr(tuned.meta, lr)
    tuned.meta["finetune_lr"] = rate
    config = TrainConfig(epochs=epochs, batch_size=batch_size, lr=rate,
                         seed=seed)

    def loss_on(indices: np.ndarray) -> nn.Tensor:
        pred = tuned.forward(inputs[indices])
        if land is not None:
            pred = pred * nn.Tensor(np.broadcast_to(land, pred.shape).copy())
        return nn.mse_loss(pred, nn.Tensor(targets[indices]))

    history = fit_minibatch(tuned.params, loss_on, inputs.shape[0], config,
                            early_stop=False)
    return tuned, history


def finetune_caelstm(seq2seq: Seq2SeqModel, encoders: dict[str, object],
                     series: dict[str, np.ndarray],
                     epochs: int = FINETUNE_EPOCHS, lr: float | None = None,
                     batch_size: int = 8, seed: int = 0,
                     allow_any_length: bool = False,
                     ) -> tuple[Seq2SeqModel, TrainingHistory]:
    """Adapt the sequence model only; the field encoders never train here."""
    variables = VARIABLES if seq2seq.mode == "joint" else (VARIABLES[0],)
    _check_length(series, variables, seq2seq.p, seq2seq.n, allow_any_length)
    latents = [np.asarray(encoders[v].encode(np.asarray(series[v], np.float32)),
                          np.float32) for v in variables]
    inputs, targets = _windows(np.concatenate(latents, axis=1),
                               seq2seq.p, seq2seq.n)
    tuned = Seq2SeqModel.from_checkpoint(seq2seq.to_checkpoint())
    rate = _finetune_lr(tuned.meta, lr)
    tuned.meta["finetune_lr"] = rate
    config = TrainConfig(epochs=epochs, batch_size=batch_size, lr=rate,
                         seed=seed)

    def loss_on(indices: np.ndarray) -> nn.Tensor:
        pred = tuned.forward(inputs[indices])
        return nn.mse_loss(pred, nn.Tensor(targets[indices]))

    history = fit_minibatch(tuned.params, loss_on, inputs.shape[0], config,
                            early_stop=False)
    return tuned, history
