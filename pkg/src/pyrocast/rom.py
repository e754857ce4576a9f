"""Field compression to a small latent space: PCA, dense AE and conv AE.

One model compresses one variable.  All three kinds share the same calling
surface: ``encode`` maps (N, H, W) normalized fields to (N, d) latent rows,
``decode`` maps latent rows back to fields, optionally re-masked to land.
PCA is a closed-form float64 baseline; the autoencoders train with Adam on
MSE under the shared early-stopping loop.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .checkpoint import Checkpoint
from .errors import ConfigError, DimensionError
from .fields import GridSpec, LandMask, apply_mask
from .metrics import Stopwatch, aep, ssim
from .training import TrainConfig, TrainingHistory, fit_minibatch

DEFAULT_LATENT = 15
_CHUNK = 256


def compression_ratio(d: int, grid: GridSpec) -> float:
    return d / grid.cells


def compression_percent(d: int, grid: GridSpec) -> str:
    """Latent size over field size, formatted to two decimals, e.g. '0.07%'."""
    return f"{100.0 * compression_ratio(d, grid):.2f}%"


def _check_fields(fields: np.ndarray, grid: GridSpec) -> np.ndarray:
    fields = np.asarray(fields)
    if fields.ndim == 2:
        fields = fields[None]
    if fields.ndim != 3 or fields.shape[1:] != grid.shape:
        raise DimensionError(
            f"expected fields shaped (N, {grid.height}, {grid.width}), got {fields.shape}")
    return fields


# ---------------------------------------------------------------------------
# PCA


class PcaModel:
    """Mean-centred truncated principal basis, kept in float64."""

    kind = "pca"

    def __init__(self, variable: str, grid: GridSpec, mean: np.ndarray,
                 components: np.ndarray):
        self.variable = variable
        self.grid = grid
        self.mean = np.asarray(mean, np.float64)
        self.components = np.asarray(components, np.float64)
        self.d = self.components.shape[0]
        if self.mean.shape != (grid.cells,) or self.components.shape[1] != grid.cells:
            raise DimensionError("PCA parameter shapes do not match the grid")

    @staticmethod
    def fit(fields: np.ndarray, d: int, variable: str, grid: GridSpec) -> "PcaModel":
        fields = _check_fields(fields, grid)
        n = fields.shape[0]
        if not 1 <= d <= min(n, grid.cells):
            raise ConfigError(
                f"latent dimension {d} out of range for {n} samples on {grid.cells} cells")
        flat = fields.reshape(n, -1).astype(np.float64)
        mean = flat.mean(axis=0)
        _, _, vt = np.linalg.svd(flat - mean, full_matrices=False)
        return PcaModel(variable, grid, mean, vt[:d])

    def encode(self, fields: np.ndarray) -> np.ndarray:
        fields = _check_fields(fields, self.grid)
        flat = fields.reshape(fields.shape[0], -1).astype(np.float64)
        return (flat - self.mean) @ self.components.T

    def decode(self, latents: np.ndarray, mask: LandMask | None = None) -> np.ndarray:
        latents = np.atleast_2d(np.asarray(latents, np.float64))
        if latents.shape[1] != self.d:
            raise DimensionError(
                f"latent width {latents.shape[1]} does not match model d={self.d}")
        flat = latents @ self.components + self.mean
        out = flat.reshape(latents.shape[0], *self.grid.shape)
        return apply_mask(out, mask) if mask is not None else out

    def to_checkpoint(self) -> Checkpoint:
        arch = {"variable": self.variable, "grid": list(self.grid.shape),
                "latent": self.d}
        return Checkpoint("pca", arch, {"mean": self.mean, "components": self.components})

    @staticmethod
    def from_checkpoint(ckpt: Checkpoint) -> "PcaModel":
        grid = GridSpec(*ckpt.arch["grid"])
        return PcaModel(ckpt.arch["variable"], grid,
                        ckpt.arrays["mean"], ckpt.arrays["components"])


# ---------------------------------------------------------------------------
# autoencoders


def _dense_param(rng, name, params, fan_in, fan_out, activation="leaky"):
    # Init matched to the following non-linearity; a scale-neutral choice
    # keeps deep stacks trainable in float32 (see nn.he_uniform).
    if activation == "leaky":
        weights = nn.he_uniform(rng, (fan_in, fan_out), fan_in)
    else:
        weights = nn.xavier_uniform(rng, (fan_in, fan_out), fan_in, fan_out)
    params[f"{name}.w"] = nn.Tensor(weights, requires_grad=True)
    params[f"{name}.b"] = nn.Tensor(nn.zeros((fan_out,)), requires_grad=True)


def _conv_param(rng, name, params, c_in, c_out, ksize=3, activation="leaky"):
    fan_in = c_in * ksize * ksize
    shape = (c_out, c_in, ksize, ksize)
    if activation == "leaky":
        kernel = nn.he_uniform(rng, shape, fan_in)
    else:
        kernel = nn.xavier_uniform(rng, shape, fan_in, c_out * ksize * ksize)
    params[f"{name}.k"] = nn.Tensor(kernel, requires_grad=True)
    params[f"{name}.b"] = nn.Tensor(nn.zeros((c_out,)), requires_grad=True)


class DenseAutoencoder:
    """Two dense layers to the latent space and a mirrored decoder."""

    kind = "ae"

    def __init__(self, variable: str, grid: GridSpec, d: int,
                 hidden: int = 128, seed: int = 0, meta: dict | None = None):
        self.variable = variable
        self.grid = grid
        self.d = d
        self.hidden = hidden
        self.meta = dict(meta or {})
        rng = np.random.default_rng(np.random.PCG64(seed))
        cells = grid.cells
        self.params: dict[str, nn.Tensor] = {}
        _dense_param(rng, "enc1", self.params, cells, hidden)
        _dense_param(rng, "enc2", self.params, hidden, d, activation="linear")
        _dense_param(rng, "dec1", self.params, d, hidden)
        _dense_param(rng, "dec2", self.params, hidden, cells, activation="linear")

    def encode_t(self, x: nn.Tensor) -> nn.Tensor:
        h = nn.leaky_relu(nn.dense(x, self.params["enc1.w"], self.params["enc1.b"]))
        return nn.dense(h, self.params["enc2.w"], self.params["enc2.b"])

    def decode_t(self, z: nn.Tensor) -> nn.Tensor:
        h = nn.leaky_relu(nn.dense(z, self.params["dec1.w"], self.params["dec1.b"]))
        return nn.sigmoid(nn.dense(h, self.params["dec2.w"], self.params["dec2.b"]))

    def _forward(self, batch: np.ndarray) -> nn.Tensor:
        flat = batch.reshape(batch.shape[0], -1)
        return self.decode_t(self.encode_t(nn.Tensor(flat)))

    def encode(self, fields: np.ndarray) -> np.ndarray:
        fields = _check_fields(fields, self.grid)
        out = []
        with nn.no_grad():
            for s in range(0, fields.shape[0], _CHUNK):
                chunk = fields[s:s + _CHUNK].reshape(-1, self.grid.cells)
                out.append(self.encode_t(nn.Tensor(chunk)).data)
        return np.concatenate(out, axis=0)

    def decode(self, latents: np.ndarray, mask: LandMask | None = None) -> np.ndarray:
        latents = np.atleast_2d(np.asarray(latents, np.float32))
        if latents.shape[1] != self.d:
            raise DimensionError(
                f"latent width {latents.shape[1]} does not match model d={self.d}")
        out = []
        with nn.no_grad():
            for s in range(0, latents.shape[0], _CHUNK):
                flat = self.decode_t(nn.Tensor(latents[s:s + _CHUNK])).data
                out.append(flat.reshape(-1, *self.grid.shape))
        fields = np.concatenate(out, axis=0)
        return apply_mask(fields, mask) if mask is not None else fields

    def to_checkpoint(self) -> Checkpoint:
        arch = {"variable": self.variable, "grid": list(self.grid.shape),
                "latent": self.d, "hidden": self.hidden, "meta": self.meta}
        return Checkpoint("ae", arch, {k: p.data for k, p in self.params.items()})

    @staticmethod
    def from_checkpoint(ckpt: Checkpoint) -> "DenseAutoencoder":
        arch = ckpt.arch
        model = DenseAutoencoder(arch["variable"], GridSpec(*arch["grid"]),
                                 arch["latent"], arch["hidden"],
                                 meta=arch.get("meta"))
        for name, arr in ckpt.arrays.items():
            model.params[name].data = arr.copy()
        return model


def _pool_plan(grid: GridSpec, blocks: int) -> tuple[list[bool], tuple[int, int]]:
    """Pool after a conv block only while both extents are still even."""
    h, w = grid.shape
    plan = []
    for _ in range(blocks):
        if h % 2 == 0 and w % 2 == 0:
            plan.append(True)
            h, w = h // 2, w // 2
        else:
            plan.append(False)
    return plan, (h, w)


class ConvAutoencoder:
    """Three conv blocks with pooling, two dense layers to the latent space,
    and a mirrored upsampling decoder ending in a sigmoid."""

    kind = "cae"

    def __init__(self, variable: str, grid: GridSpec, d: int,
                 filters: tuple[int, int, int] = (32, 16, 8),
                 dense_width: int = 64, seed: int = 0, meta: dict | None = None):
        self.variable = variable
        self.grid = grid
        self.d = d
        self.filters = tuple(filters)
        self.dense_width = dense_width
        self.meta = dict(meta or {})
        self.pools, self.bottom = _pool_plan(grid, len(self.filters))
        f1, f2, f3 = self.filters
        flat = f3 * self.bottom[0] * self.bottom[1]
        self.flat = flat
        rng = np.random.default_rng(np.random.PCG64(seed))
        p: dict[str, nn.Tensor] = {}
        _conv_param(rng, "enc1", p, 1, f1)
        _conv_param(rng, "enc2", p, f1, f2)
        _conv_param(rng, "enc3", p, f2, f3)
        _dense_param(rng, "lat1", p, flat, dense_width)
        _dense_param(rng, "lat2", p, dense_width, d, activation="linear")
        _dense_param(rng, "unlat1", p, d, dense_width)
        _dense_param(rng, "unlat2", p, dense_width, flat)
        _conv_param(rng, "dec3", p, f3, f2)
        _conv_param(rng, "dec2", p, f2, f1)
        _conv_param(rng, "dec1", p, f1, 1, activation="linear")
        self.params = p

    def _block(self, x: nn.Tensor, name: str) -> nn.Tensor:
        return nn.leaky_relu(
            nn.conv2d(x, self.params[f"{name}.k"], self.params[f"{name}.b"]))

    def encode_t(self, x: nn.Tensor) -> nn.Tensor:
        h = x
        for i in range(3):
            h = self._block(h, f"enc{i + 1}")
            if self.pools[i]:
                h = nn.maxpool2(h)
        h = h.reshape(h.shape[0], self.flat)
        h = nn.leaky_relu(nn.dense(h, self.params["lat1.w"], self.params["lat1.b"]))
        return nn.dense(h, self.params["lat2.w"], self.params["lat2.b"])

    def decode_t(self, z: nn.Tensor) -> nn.Tensor:
        h = nn.leaky_relu(nn.dense(z, self.params["unlat1.w"], self.params["unlat1.b"]))
        h = nn.leaky_relu(nn.dense(h, self.params["unlat2.w"], self.params["unlat2.b"]))
        h = h.reshape(h.shape[0], self.filters[2], *self.bottom)
        for i in (2, 1):
            if self.pools[i]:
                h = nn.upsample2(h)
            h = self._block(h, f"dec{i + 1}")
        if self.pools[0]:
            h = nn.upsample2(h)
        return nn.sigmoid(
            nn.conv2d(h, self.params["dec1.k"], self.params["dec1.b"]))

    def _forward(self, batch: np.ndarray) -> nn.Tensor:
        x = nn.Tensor(batch[:, None])
        return self.decode_t(self.encode_t(x))

    def encode(self, fields: np.ndarray) -> np.ndarray:
        fields = _check_fields(fields, self.grid)
        out = []
        with nn.no_grad():
            for s in range(0, fields.shape[0], _CHUNK):
                x = nn.Tensor(fields[s:s + _CHUNK][:, None])
                out.append(self.encode_t(x).data)
        return np.concatenate(out, axis=0)

    def decode(self, latents: np.ndarray, mask: LandMask | None = None) -> np.ndarray:
        latents = np.atleast_2d(np.asarray(latents, np.float32))
        if latents.shape[1] != self.d:
            raise DimensionError(
                f"latent width {latents.shape[1]} does not match model d={self.d}")
        out = []
        with nn.no_grad():
            for s in range(0, latents.shape[0], _CHUNK):
                fields = self.decode_t(nn.Tensor(latents[s:s + _CHUNK])).data
                out.append(fields[:, 0])
        fields = np.concatenate(out, axis=0)
        return apply_mask(fields, mask) if mask is not None else fields

    def to_checkpoint(self) -> Checkpoint:
        arch = {"variable": self.variable, "grid": list(self.grid.shape),
                "latent": self.d, "filters": list(self.filters),
                "dense_width": self.dense_width, "meta": self.meta}
        return Checkpoint("cae", arch, {k: p.data for k, p in self.params.items()})

    @staticmethod
    def from_checkpoint(ckpt: Checkpoint) -> "ConvAutoencoder":
        arch = ckpt.arch
        model = ConvAutoencoder(arch["variable"], GridSpec(*arch["grid"]),
                                arch["latent"], tuple(arch["filters"]),
                                arch["dense_width"], meta=arch.get("meta"))
        for name, arr in ckpt.arrays.items():
            model.params[name].data = arr.copy()
        return model


# ---------------------------------------------------------------------------
# fitting and evaluation


def fit_autoencoder(fields: np.ndarray, d: int, kind: str, variable: str,
                    grid: GridSpec, config: TrainConfig,
                    filters: tuple[int, int, int] = (32, 16, 8),
                    dense_width: int = 64, hidden: int = 128,
                    mask: LandMask | None = None) -> tuple[object, TrainingHistory]:
    """Train a dense ('ae') or convolutional ('cae') autoencoder.

    With a mask, the loss covers land cells only.  Ocean cells are
    structurally zero and re-masked at decode time; letting them drive the
    loss pushes the output sigmoid into saturation on sparse fields.
    """
    fields = _check_fields(np.asarray(fields, np.float32), grid)
    if kind == "ae":
        model = DenseAutoencoder(variable, grid, d, hidden, seed=config.seed)
    elif kind == "cae":
        model = ConvAutoencoder(variable, grid, d, filters, dense_width,
                                seed=config.seed)
    else:
        raise ConfigError(f"unknown autoencoder kind {kind!r}")
    model.meta["train_lr"] = config.lr
    if mask is not None:
        fields = apply_mask(fields, mask)
        land = mask.land.astype(np.float32)

    def loss_on(indices: np.ndarray) -> nn.Tensor:
        batch = fields[indices]
        recon = model._forward(batch)
        if recon.data.ndim == 4:
            target = batch[:, None]
        else:
            target = batch.reshape(len(indices), -1)
        if mask is not None:
            weights = np.broadcast_to(land.reshape(target.shape[1:]),
                                      target.shape).copy()
            recon = recon * nn.Tensor(weights)
        return nn.mse_loss(recon, nn.Tensor(target))

    history = fit_minibatch(model.params, loss_on, fields.shape[0], config)
    return model, history


def evaluate_encoder(model, fields: np.ndarray, mask: LandMask) -> dict:
    """Round-trip metrics plus encode+decode wall time over a field stack."""
    fields = _check_fields(fields, model.grid)
    with Stopwatch() as watch:
        recon = model.decode(model.encode(fields), mask)
    reference = apply_mask(fields, mask)
    aeps = [aep(r, f, mask) for r, f in zip(recon, reference)]
    ssims = [ssim(r, f, mask) for r, f in zip(recon, reference)]
    return {
        "kind": model.kind,
        "variable": model.variable,
        "latent": model.d,
        "aep": float(np.mean(aeps)),
        "ssim": float(np.mean(ssims)),
        "seconds": watch.seconds,
        "compression": compression_percent(model.d, model.grid),
    }


_LOADERS = {"pca": PcaModel.from_checkpoint,
            "ae": DenseAutoencoder.from_checkpoint,
            "cae": ConvAutoencoder.from_checkpoint}


def encoder_from_checkpoint(ckpt: Checkpoint):
    try:
        return _LOADERS[ckpt.kind](ckpt)
    except KeyError:
        raise ConfigError(f"not an encoder checkpoint: kind {ckpt.kind!r}") from None
