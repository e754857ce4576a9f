"""Convolutional LSTM surrogate operating directly on field frames.

Joint mode runs four parallel single-variable recurrent blocks whose hidden
states are concatenated in front of a 1x1 sigmoid head that re-emits all
four variables, so predictions can be fed back autoregressively.  Single
mode keeps one block and forecasts burnt area alone.  Decoding is
free-running: after the p conditioning frames the model consumes its own
previous output (or supplied driver frames for the non-target variables).
"""

from __future__ import annotations

import numpy as np

from . import nn
from .checkpoint import Checkpoint
from .errors import ConfigError, DimensionError
from .fields import LandMask
from .training import TrainConfig, TrainingHistory, fit_minibatch

MODES = ("single", "joint")


def make_convlstm_cell(rng: np.random.Generator, in_channels: int,
                       hidden: int, ksize: int = 3) -> dict[str, nn.Tensor]:
    """All four gate kernels fused along the output-channel axis."""
    fan = (in_channels + hidden) * ksize * ksize
    kernel = nn.fan_in_uniform(
        rng, (4 * hidden, in_channels + hidden, ksize, ksize), fan)
    return {"gates.k": nn.Tensor(kernel, requires_grad=True),
            "gates.b": nn.Tensor(nn.zeros((4 * hidden,)), requires_grad=True)}


def convlstm_cell(x: nn.Tensor, h_prev: nn.Tensor, c_prev: nn.Tensor,
                  cell: dict[str, nn.Tensor]) -> tuple[nn.Tensor, nn.Tensor]:
    """One recurrence step over (B, C, H, W) frames."""
    if x.shape[0] != h_prev.shape[0] or x.shape[2:] != h_prev.shape[2:]:
        raise DimensionError(
            f"frame {x.shape} does not align with state {h_prev.shape}")
    hidden = h_prev.shape[1]
    z = nn.concat([h_prev, x], axis=1)
    gates = nn.conv2d(z, cell["gates.k"], cell["gates.b"])
    f = nn.sigmoid(nn.narrow(gates, 1, 0, hidden))
    i = nn.sigmoid(nn.narrow(gates, 1, hidden, hidden))
    o = nn.sigmoid(nn.narrow(gates, 1, 2 * hidden, hidden))
    g = nn.tanh(nn.narrow(gates, 1, 3 * hidden, hidden))
    c = f * c_prev + i * g
    h = o * nn.tanh(c)
    return h, c


class ConvLstmModel:
    """Per-variable recurrent blocks, concatenated into a 1x1 sigmoid head."""

    kind = "convlstm"

    def __init__(self, mode: str, p: int, n: int, hidden: int = 4,
                 ksize: int = 3, seed: int = 0, meta: dict | None = None):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if p != n:
            raise ConfigError(f"input and output lengths must match, got {p} and {n}")
        if ksize % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {ksize}")
        self.mode = mode
        self.p = p
        self.n = n
        self.hidden = hidden
        self.ksize = ksize
        self.n_blocks = 4 if mode == "joint" else 1
        self.meta = dict(meta or {})
        rng = np.random.default_rng(np.random.PCG64(seed))
        params: dict[str, nn.Tensor] = {}
        for v in range(self.n_blocks):
            for key, t in make_convlstm_cell(rng, 1, hidden, ksize).items():
                params[f"block{v}.{key}"] = t
        head_in = self.n_blocks * hidden
        params["head.k"] = nn.Tensor(
            nn.fan_in_uniform(rng, (self.n_blocks, head_in, 1, 1), head_in),
            requires_grad=True)
        params["head.b"] = nn.Tensor(nn.zeros((self.n_blocks,)), requires_grad=True)
        self.params = params

    def _cell(self, v: int) -> dict[str, nn.Tensor]:
        prefix = f"block{v}."
        return {k[len(prefix):]: t for k, t in self.params.items()
                if k.startswith(prefix)}

    def forward(self, inputs: np.ndarray,
                driver_frames: np.ndarray | None = None) -> nn.Tensor:
        """(B, p, V, H, W) conditioning block to (B, n, V, H, W) predictions.

        driver_frames, when given in joint mode, replaces the fed-back
        non-burnt channels during free-running decode with known frames;
        shape (B, n-1, 3, H, W) covering the first n-1 forecast months.
        """
        inputs = np.asarray(inputs, np.float32)
        if inputs.ndim != 5 or inputs.shape[1] != self.p \
                or inputs.shape[2] != self.n_blocks:
            raise DimensionError(
                f"expected inputs (B, {self.p}, {self.n_blocks}, H, W), "
                f"got {inputs.shape}")
        if driver_frames is not None:
            if self.mode != "joint":
                raise ConfigError("driver frames only apply to joint mode")
            driver_frames = np.asarray(driver_frames, np.float32)
            want = (inputs.shape[0], self.n - 1, 3, *inputs.shape[3:])
            if driver_frames.shape != want:
                raise DimensionError(
                    f"driver frames must be {want}, got {driver_frames.shape}")
        b, _, _, height, width = inputs.shape
        x = nn.Tensor(inputs)
        state_shape = (b, self.hidden, height, width)
        states = [(nn.Tensor(np.zeros(state_shape, np.float32)),
                   nn.Tensor(np.zeros(state_shape, np.float32)))
                  for _ in range(self.n_blocks)]
        cells = [self._cell(v) for v in range(self.n_blocks)]
        outputs: list[nn.Tensor] = []
        previous: nn.Tensor | None = None
        for t in range(self.p + self.n - 1):
            if t < self.p:
                frame = nn.narrow(x, 1, t, 1).reshape(
                    b, self.n_blocks, height, width)
            elif driver_frames is None:
                frame = previous
            else:
                burnt = nn.narrow(previous, 1, 0, 1)
                known = nn.Tensor(driver_frames[:, t - self.p])
                frame = nn.concat([burnt, known], axis=1)
            hs = []
            for v in range(self.n_blocks):
                x_v = nn.narrow(frame, 1, v, 1)
                h, c = convlstm_cell(x_v, states[v][0], states[v][1], cells[v])
                states[v] = (h, c)
                hs.append(h)
            if t >= self.p - 1:
                merged = hs[0] if len(hs) == 1 else nn.concat(hs, axis=1)
                previous = nn.sigmoid(
                    nn.conv2d(merged, self.params["head.k"], self.params["head.b"]))
                outputs.append(previous)
        return nn.stack(outputs, axis=1)

    def _forecast_one(self, block: np.ndarray,
                      drivers: np.ndarray | None) -> np.ndarray:
        """Allocation-light decode of one (p, V, H, W) conditioning block.

        Mirrors :meth:`forward` step for step but works channel-major on
        reused buffers, which keeps long autoregressive rollouts fast.
        """
        nb, hid, ksize = self.n_blocks, self.hidden, self.ksize
        pad = ksize // 2
        height, width = block.shape[2:]
        px = height * width
        cin = hid + 1
        kmats = [self.params[f"block{v}.gates.k"].data.reshape(4 * hid, -1)
                 for v in range(nb)]
        kbias = [self.params[f"block{v}.gates.b"].data[:, None]
                 for v in range(nb)]
        head_k = self.params["head.k"].data.reshape(nb, nb * hid)
        head_b = self.params["head.b"].data[:, None]

        padded = np.zeros((nb, cin, height + 2 * pad, width + 2 * pad), np.float32)
        core = (slice(None), slice(pad, pad + height), slice(pad, pad + width))
        cols = np.empty((cin * ksize * ksize, px), np.float32)
        gates = np.empty((4 * hid, px), np.float32)
        cell = np.zeros((nb, hid, px), np.float32)
        merged = np.zeros((nb * hid, px), np.float32)  # hidden states, row-blocked
        scratch = np.empty((hid, px), np.float32)
        pred = np.empty((nb, px), np.float32)
        out = np.empty((self.n, nb, height, width), np.float32)

        def squash(a: np.ndarray) -> None:
            np.negative(a, out=a)
            np.exp(a, out=a)
            a += 1.0
            np.reciprocal(a, out=a)

        for t in range(self.p + self.n - 1):
            if t < self.p:
                frame = block[t]
            elif drivers is None:
                frame = pred.reshape(nb, height, width)
            else:
                frame = np.concatenate(
                    [pred[:1].reshape(1, height, width), drivers[t - self.p]])
            for v in range(nb):
                padded[v][:hid][core] = \
                    merged[v * hid:(v + 1) * hid].reshape(hid, height, width)
                padded[v][hid][core[1:]] = frame[v]
                taps = cols.reshape(cin, ksize * ksize, height, width)
                for di in range(ksize):
                    for dj in range(ksize):
                        np.copyto(taps[:, di * ksize + dj],
                                  padded[v][:, di:di + height, dj:dj + width])
                np.dot(kmats[v], cols, out=gates)
                gates += kbias[v]
                squash(gates[:3 * hid])
                np.tanh(gates[3 * hid:], out=gates[3 * hid:])
                forget, incoming, expose = (gates[:hid], gates[hid:2 * hid],
                                            gates[2 * hid:3 * hid])
                cell[v] *= forget
                np.multiply(incoming, gates[3 * hid:], out=scratch)
                cell[v] += scratch
                hidden_rows = merged[v * hid:(v + 1) * hid]
                np.tanh(cell[v], out=hidden_rows)
                hidden_rows *= expose
            if t >= self.p - 1:
                np.dot(head_k, merged, out=pred)
                pred += head_b
                squash(pred)
                out[t - self.p + 1] = pred.reshape(nb, height, width)
        return out

    def forecast(self, block: np.ndarray,
                 driver_frames: np.ndarray | None = None) -> np.ndarray:
        """Pure inference; accepts (p, V, H, W) or (B, p, V, H, W)."""
        block = np.asarray(block, np.float32)
        single = block.ndim == 4
        if single:
            block = block[None]
            if driver_frames is not None:
                driver_frames = np.asarray(driver_frames, np.float32)[None]
        if block.ndim != 5 or block.shape[1] != self.p \
                or block.shape[2] != self.n_blocks:
            raise DimensionError(
                f"expected inputs (B, {self.p}, {self.n_blocks}, H, W), "
                f"got {block.shape}")
        if driver_frames is not None:
            if self.mode != "joint":
                raise ConfigError("driver frames only apply to joint mode")
            driver_frames = np.asarray(driver_frames, np.float32)
            want = (block.shape[0], self.n - 1, 3, *block.shape[3:])
            if driver_frames.shape != want:
                raise DimensionError(
                    f"driver frames must be {want}, got {driver_frames.shape}")
        out = np.stack([
            self._forecast_one(
                block[i], None if driver_frames is None else driver_frames[i])
            for i in range(block.shape[0])])
        out = np.clip(out, 0.0, 1.0)
        return out[0] if single else out

    def to_checkpoint(self) -> Checkpoint:
        arch = {"mode": self.mode, "p": self.p, "n": self.n,
                "hidden": self.hidden, "ksize": self.ksize, "meta": self.meta}
        return Checkpoint(self.kind, arch,
                          {k: t.data for k, t in self.params.items()})

    @staticmethod
    def from_checkpoint(ckpt: Checkpoint) -> "ConvLstmModel":
        if ckpt.kind != "convlstm":
            raise ConfigError(f"not a convlstm checkpoint: kind {ckpt.kind!r}")
        a = ckpt.arch
        model = ConvLstmModel(a["mode"], a["p"], a["n"], a["hidden"],
                              a["ksize"], meta=a.get("meta"))
        for name, arr in ckpt.arrays.items():
            model.params[name].data = arr.copy()
        return model


def train_convlstm(inputs: np.ndarray, targets: np.ndarray, mode: str,
                   config: TrainConfig, hidden: int = 4, ksize: int = 3,
                   mask: LandMask | None = None,
                   ) -> tuple[ConvLstmModel, TrainingHistory]:
    """Fit on normalized field windows shaped (N, steps, V, H, W).

    With a mask, ocean cells drop out of the loss; they are structurally
    zero and would otherwise drag the output sigmoid into saturation.
    """
    inputs = np.asarray(inputs, np.float32)
    targets = np.asarray(targets, np.float32)
    if inputs.shape != targets.shape:
        raise DimensionError(
            f"window shapes differ: {inputs.shape} vs {targets.shape}")
    if inputs.ndim != 5:
        raise DimensionError("windows must be shaped (N, steps, V, H, W)")
    model = ConvLstmModel(mode, inputs.shape[1], targets.shape[1], hidden,
                          ksize, seed=config.seed)
    if inputs.shape[2] != model.n_blocks:
        raise DimensionError(
            f"{mode} mode expects {model.n_blocks} variables, got {inputs.shape[2]}")
    model.meta["train_lr"] = config.lr
    model.meta["grid"] = list(inputs.shape[3:])
    land = None
    if mask is not None:
        if mask.grid.shape != inputs.shape[3:]:
            raise DimensionError(
                f"mask grid {mask.grid.shape} does not match windows {inputs.shape}")
        land = mask.land.astype(np.float32)
        targets = np.where(mask.land, targets, np.float32(0.0))

    def loss_on(indices: np.ndarray) -> nn.Tensor:
        pred = model.forward(inputs[indices])
        if land is not None:
            pred = pred * nn.Tensor(np.broadcast_to(land, pred.shape).copy())
        return nn.mse_loss(pred, nn.Tensor(targets[indices]))

    history = fit_minibatch(model.params, loss_on, inputs.shape[0], config)
    return model, history
