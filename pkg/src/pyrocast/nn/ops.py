"""Differentiable primitives: layers, activations, losses.

All functions take and return :class:`~pyrocast.nn.tensor.Tensor`.  Spatial
operators work on (batch, channels, height, width) arrays.  Convolutions use
odd square kernels with zero same-padding, so outputs keep the input's
spatial extent.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, DimensionError
from .tensor import Tensor

# ---------------------------------------------------------------------------
# dense


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` for x (B, I), w (I, O), b (O,)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise DimensionError("dense expects 2-d input and weight")
    if x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(
            f"dense shapes incompatible: {x.data.shape} @ {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise DimensionError("dense bias must match output width")

    def backward(g: np.ndarray) -> None:
        x._accumulate(g @ w.data.T)
        w._accumulate(x.data.T @ g)
        b._accumulate(g.sum(axis=0))

    return Tensor._result(x.data @ w.data + b.data, (x, w, b), backward)


# ---------------------------------------------------------------------------
# convolution


def _windows(arr: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad (B,C,H,W) by k//2 and return (B,C,H,W,k,k) sliding windows."""
    p = k // 2
    padded = np.pad(arr, ((0, 0), (0, 0), (p, p), (p, p)))
    return sliding_window_view(padded, (k, k), axis=(2, 3))


def _patch_matrix(arr: np.ndarray, k: int) -> np.ndarray:
    """im2col: (B,C,H,W) to a contiguous (B*H*W, C*k*k) patch matrix."""
    bsz, c, h, w = arr.shape
    if k == 1:
        return np.ascontiguousarray(arr.transpose(0, 2, 3, 1)).reshape(-1, c)
    win = _windows(arr, k).transpose(0, 2, 3, 1, 4, 5)
    return np.ascontiguousarray(win).reshape(bsz * h * w, c * k * k)


def _patches_to_grid(gcols: np.ndarray, shape: tuple[int, ...],
                     k: int) -> np.ndarray:
    """col2im: scatter-add patch gradients back onto the (B,C,H,W) grid."""
    bsz, c, h, w = shape
    if k == 1:
        return np.ascontiguousarray(
            gcols.reshape(bsz, h, w, c).transpose(0, 3, 1, 2))
    pad = k // 2
    grid = np.zeros((bsz, c, h + 2 * pad, w + 2 * pad), np.float32)
    parts = gcols.reshape(bsz, h, w, c, k, k)
    for di in range(k):
        for dj in range(k):
            grid[:, :, di:di + h, dj:dj + w] += \
                parts[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(grid[:, :, pad:pad + h, pad:pad + w])


def conv2d(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """Same-padding cross-correlation of x (B,C,H,W) with kernels (O,C,kh,kw).

    Kernel extents must be odd and square so the padded output matches the
    input grid exactly.  The per-channel bias b has shape (O,).
    """
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise DimensionError("conv2d expects (B,C,H,W) input and (O,C,kh,kw) kernels")
    ksize = k.data.shape[2]
    if k.data.shape[3] != ksize:
        raise ConfigError("conv2d kernels must be square")
    if ksize % 2 == 0:
        raise ConfigError("conv2d kernel size must be odd for same padding")
    if x.data.shape[1] != k.data.shape[1]:
        raise DimensionError(
            f"conv2d channel mismatch: input {x.data.shape[1]}, kernel {k.data.shape[1]}")
    if b.data.shape != (k.data.shape[0],):
        raise DimensionError("conv2d bias must have one entry per output channel")

    bsz, cin, h, w = x.data.shape
    cout = k.data.shape[0]
    cols = _patch_matrix(x.data, ksize)  # (B*H*W, C*k*k), kept for backward
    kmat = k.data.reshape(cout, -1)
    out = (cols @ kmat.T).reshape(bsz, h, w, cout)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + b.data[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        g2d = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, cout)
        b._accumulate(g2d.sum(axis=0))
        k._accumulate((g2d.T @ cols).reshape(k.data.shape))
        if cin <= cout:
            x._accumulate(_patches_to_grid(g2d @ kmat, x.data.shape, ksize))
        else:
            # Transposed-conv route gathers O*k*k values per pixel; cheaper
            # than col2im's C*k*k when the layer narrows the channel count.
            flipped = k.data[:, :, ::-1, ::-1]
            gwin = _windows(g, ksize)  # (B,O,H,W,k,k)
            gx = np.tensordot(gwin, flipped, axes=[(1, 4, 5), (0, 2, 3)])
            x._accumulate(np.ascontiguousarray(gx.transpose(0, 3, 1, 2)))

    return Tensor._result(out.astype(np.float32, copy=False), (x, k, b), backward)


# ---------------------------------------------------------------------------
# resolution changes


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2.  Spatial extents must be even."""
    if x.data.ndim != 4:
        raise DimensionError("maxpool2 expects (B,C,H,W)")
    bsz, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 needs even extents, got {h}x{w}")
    tiles = x.data.reshape(bsz, c, h // 2, 2, w // 2, 2)
    tiles = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h // 2, w // 2, 4)
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> None:
        scatter = np.zeros_like(tiles)
        np.put_along_axis(scatter, idx[..., None], g[..., None], axis=-1)
        scatter = scatter.reshape(bsz, c, h // 2, w // 2, 2, 2)
        scatter = scatter.transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h, w)
        x._accumulate(scatter)

    return Tensor._result(out, (x,), backward)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of (B,C,H,W)."""
    if x.data.ndim != 4:
        raise DimensionError("upsample2 expects (B,C,H,W)")
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    bsz, c, h, w = x.data.shape

    def backward(g: np.ndarray) -> None:
        x._accumulate(g.reshape(bsz, c, h, 2, w, 2).sum(axis=(3, 5)))

    return Tensor._result(out, (x,), backward)


# ---------------------------------------------------------------------------
# activations


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))
    y = y.astype(np.float32, copy=False)

    def backward(g: np.ndarray) -> None:
        x._accumulate(g * y * (1.0 - y))

    return Tensor._result(y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g: np.ndarray) -> None:
        x._accumulate(g * (1.0 - y * y))

    return Tensor._result(y, (x,), backward)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0.0)

    def backward(g: np.ndarray) -> None:
        x._accumulate(g * (x.data > 0.0))

    return Tensor._result(y, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    y = np.where(x.data > 0.0, x.data, np.float32(slope) * x.data)

    def backward(g: np.ndarray) -> None:
        x._accumulate(g * np.where(x.data > 0.0, np.float32(1.0), np.float32(slope)))

    return Tensor._result(y, (x,), backward)


# ---------------------------------------------------------------------------
# loss


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over every element."""
    if pred.data.shape != target.data.shape:
        raise DimensionError(
            f"mse_loss shapes differ: {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    n = float(diff.size)

    def backward(g: np.ndarray) -> None:
        scale = 2.0 * float(g) / n
        pred._accumulate(scale * diff)
        target._accumulate(-scale * diff)

    return Tensor._result(np.float32(np.mean(diff * diff, dtype=np.float64)),
                          (pred, target), backward)


# ---------------------------------------------------------------------------
# structural ops


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    """Concatenate along an existing axis."""
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(a), int(b))
            t._accumulate(g[tuple(sl)])

    return Tensor._result(data, tensors, backward)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    """Stack equal-shape tensors along a new axis."""
    expanded = []
    for t in tensors:
        shape = list(t.data.shape)
        shape.insert(axis, 1)
        expanded.append(t.reshape(*shape))
    return concat(expanded, axis=axis)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    if start < 0 or start + length > x.data.shape[axis]:
        raise DimensionError(
            f"narrow [{start}:{start + length}) out of range on axis {axis} "
            f"of shape {x.data.shape}")
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[sl] = g
        x._accumulate(full)

    return Tensor._result(x.data[sl].copy(), (x,), backward)
