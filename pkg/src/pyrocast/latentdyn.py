"""LSTM sequence-to-sequence forecaster over latent rows.

The model reads p latent rows, repeats the encoder's final hidden state n
times, and decodes each repetition through a second LSTM plus a shared
linear head back to latent width.  Single mode forecasts the burnt-area
latent alone (width d); joint mode forecasts all four variables stacked
side by side (width 4d).
"""

from __future__ import annotations

import numpy as np

from . import nn
from .checkpoint import Checkpoint
from .errors import ConfigError, DimensionError
from .training import TrainConfig, TrainingHistory, fit_minibatch

MODES = ("single", "joint")


def make_lstm_cell(rng: np.random.Generator, width_in: int,
                   hidden: int) -> dict[str, nn.Tensor]:
    """Gate weights over the concatenation [y_prev, x], one block per gate."""
    fan = width_in + hidden
    cell: dict[str, nn.Tensor] = {}
    for gate in ("f", "i", "o", "c"):
        cell[f"{gate}.w"] = nn.Tensor(
            nn.fan_in_uniform(rng, (fan, hidden), fan), requires_grad=True)
        cell[f"{gate}.b"] = nn.Tensor(nn.zeros((hidden,)), requires_grad=True)
    return cell


def lstm_cell(x: nn.Tensor, y_prev: nn.Tensor, c_prev: nn.Tensor,
              cell: dict[str, nn.Tensor]) -> tuple[nn.Tensor, nn.Tensor]:
    """One recurrence step; returns the new output y and cell state c."""
    if x.shape[0] != y_prev.shape[0]:
        raise DimensionError(
            f"batch sizes differ: input {x.shape} vs state {y_prev.shape}")
    z = nn.concat([y_prev, x], axis=1)
    f = nn.sigmoid(nn.dense(z, cell["f.w"], cell["f.b"]))
    i = nn.sigmoid(nn.dense(z, cell["i.w"], cell["i.b"]))
    o = nn.sigmoid(nn.dense(z, cell["o.w"], cell["o.b"]))
    g = nn.tanh(nn.dense(z, cell["c.w"], cell["c.b"]))
    c = f * c_prev + i * g
    y = o * nn.tanh(c)
    return y, c


class Seq2SeqModel:
    """Encoder LSTM over p steps, repeat-vector decoder emitting n steps."""

    kind = "seq2seq"

    def __init__(self, mode: str, width: int, p: int, n: int,
                 enc_hidden: int = 64, dec_hidden: int = 32, seed: int = 0,
                 meta: dict | None = None):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if p != n:
            raise ConfigError(f"input and output lengths must match, got {p} and {n}")
        self.mode = mode
        self.width = width
        self.p = p
        self.n = n
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.meta = dict(meta or {})
        rng = np.random.default_rng(np.random.PCG64(seed))
        params: dict[str, nn.Tensor] = {}
        for key, t in make_lstm_cell(rng, width, enc_hidden).items():
            params[f"enc.{key}"] = t
        for key, t in make_lstm_cell(rng, enc_hidden, dec_hidden).items():
            params[f"dec.{key}"] = t
        params["head.w"] = nn.Tensor(
            nn.fan_in_uniform(rng, (dec_hidden, width), dec_hidden),
            requires_grad=True)
        params["head.b"] = nn.Tensor(nn.zeros((width,)), requires_grad=True)
        self.params = params

    def _cell(self, prefix: str) -> dict[str, nn.Tensor]:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in self.params.items()
                if k.startswith(prefix + ".")}

    def forward(self, inputs: np.ndarray) -> nn.Tensor:
        """(B, p, width) latent block to a (B, n, width) prediction tensor."""
        inputs = np.asarray(inputs, np.float32)
        if inputs.ndim != 3 or inputs.shape[1:] != (self.p, self.width):
            raise DimensionError(
                f"expected inputs (B, {self.p}, {self.width}), got {inputs.shape}")
        b = inputs.shape[0]
        x = nn.Tensor(inputs)
        enc = self._cell("enc")
        dec = self._cell("dec")
        y = nn.Tensor(np.zeros((b, self.enc_hidden), np.float32))
        c = nn.Tensor(np.zeros((b, self.enc_hidden), np.float32))
        for t in range(self.p):
            x_t = nn.narrow(x, 1, t, 1).reshape(b, self.width)
            y, c = lstm_cell(x_t, y, c, enc)
        yd = nn.Tensor(np.zeros((b, self.dec_hidden), np.float32))
        cd = nn.Tensor(np.zeros((b, self.dec_hidden), np.float32))
        steps = []
        for _ in range(self.n):
            yd, cd = lstm_cell(y, yd, cd, dec)
            steps.append(nn.dense(yd, self.params["head.w"], self.params["head.b"]))
        return nn.stack(steps, axis=1)

    def forecast(self, block: np.ndarray) -> np.ndarray:
        """Pure inference; accepts (p, width) or (B, p, width)."""
        block = np.asarray(block, np.float32)
        single = block.ndim == 2
        if single:
            block = block[None]
        with nn.no_grad():
            out = self.forward(block).data
        return out[0] if single else out

    def to_checkpoint(self) -> Checkpoint:
        arch = {"mode": self.mode, "width": self.width, "p": self.p,
                "n": self.n, "enc_hidden": self.enc_hidden,
                "dec_hidden": self.dec_hidden, "meta": self.meta}
        return Checkpoint(self.kind, arch,
                          {k: t.data for k, t in self.params.items()})

    @staticmethod
    def from_checkpoint(ckpt: Checkpoint) -> "Seq2SeqModel":
        if ckpt.kind != "seq2seq":
            raise ConfigError(f"not a seq2seq checkpoint: kind {ckpt.kind!r}")
        a = ckpt.arch
        model = Seq2SeqModel(a["mode"], a["width"], a["p"], a["n"],
                             a["enc_hidden"], a["dec_hidden"],
                             meta=a.get("meta"))
        for name, arr in ckpt.arrays.items():
            model.params[name].data = arr.copy()
        return model


def train_seq2seq(inputs: np.ndarray, targets: np.ndarray, mode: str,
                  config: TrainConfig, enc_hidden: int = 64,
                  dec_hidden: int = 32) -> tuple[Seq2SeqModel, TrainingHistory]:
    """Fit a seq2seq model on pre-encoded latent windows."""
    inputs = np.asarray(inputs, np.float32)
    targets = np.asarray(targets, np.float32)
    if inputs.shape != targets.shape:
        raise DimensionError(
            f"window shapes differ: {inputs.shape} vs {targets.shape}")
    if inputs.ndim != 3:
        raise DimensionError("windows must be shaped (N, steps, width)")
    n_windows, p, width = inputs.shape
    model = Seq2SeqModel(mode, width, p, targets.shape[1], enc_hidden,
                         dec_hidden, seed=config.seed)
    model.meta["train_lr"] = config.lr

    def loss_on(indices: np.ndarray) -> nn.Tensor:
        pred = model.forward(inputs[indices])
        return nn.mse_loss(pred, nn.Tensor(targets[indices]))

    history = fit_minibatch(model.params, loss_on, n_windows, config)
    return model, history
