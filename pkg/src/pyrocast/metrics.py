"""Forecast quality metrics and wall-clock measurement.

Both metrics operate on normalized fields with ocean cells zeroed.  The
absolute error percentage (aep) averages |prediction - reference| over land
cells only.  Structural similarity (ssim) is computed once over the whole
frame with the standard stabilizing constants for a unit value range; its
statistics include ocean cells by default, or land cells only on request.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import ConfigError, DimensionError
from .fields import LandMask, apply_mask

VALUE_RANGE = 1.0
C1 = (0.01 * VALUE_RANGE) ** 2
C2 = (0.03 * VALUE_RANGE) ** 2


def _check_pair(a: np.ndarray, b: np.ndarray, mask: LandMask) -> None:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"field shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-2:] != mask.grid.shape:
        raise DimensionError(
            f"fields {a.shape} do not match grid {mask.grid.shape}")
    if mask.land_count == 0:
        raise ConfigError("metric mask has no land cells")


def aep(pred: np.ndarray, ref: np.ndarray, mask: LandMask) -> float:
    """Mean absolute error over land cells of one frame."""
    _check_pair(pred, ref, mask)
    diff = np.abs(np.asarray(pred, np.float64) - np.asarray(ref, np.float64))
    return float(diff[mask.land].sum() / mask.land_count)


def aep_series(preds: np.ndarray, refs: np.ndarray, mask: LandMask) -> np.ndarray:
    """aep of every frame of matching (T, H, W) stacks."""
    _check_pair(preds, refs, mask)
    diff = np.abs(preds.astype(np.float64) - refs.astype(np.float64))
    return diff[:, mask.land].sum(axis=1) / mask.land_count


def ssim(a: np.ndarray, b: np.ndarray, mask: LandMask,
         land_only: bool = False) -> float:
    """Single-window structural similarity of two frames, clamped to [0, 1].

    Covariance can push the raw formula below zero for anti-correlated
    fields; the clamp keeps the reported range within [0, 1].
    """
    _check_pair(a, b, mask)
    if land_only:
        x = np.asarray(a, np.float64)[mask.land]
        y = np.asarray(b, np.float64)[mask.land]
    else:
        x = apply_mask(a, mask).astype(np.float64).ravel()
        y = apply_mask(b, mask).astype(np.float64).ravel()
    mu_x, mu_y = x.mean(), y.mean()
    var_x, var_y = x.var(), y.var()
    cov = ((x - mu_x) * (y - mu_y)).mean()
    value = ((2.0 * mu_x * mu_y + C1) * (2.0 * cov + C2)) / \
            ((mu_x * mu_x + mu_y * mu_y + C1) * (var_x + var_y + C2))
    return float(min(1.0, max(0.0, value)))


def ssim_series(preds: np.ndarray, refs: np.ndarray, mask: LandMask,
                land_only: bool = False) -> np.ndarray:
    _check_pair(preds, refs, mask)
    return np.array([ssim(p, r, mask, land_only=land_only)
                     for p, r in zip(preds, refs)])


class Stopwatch:
    """Wall-clock context manager; seconds readable after the block ends."""

    def __init__(self) -> None:
        self.seconds = 0.0

    def __enter__(self) -> "Stopwatch":
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.seconds = time.perf_counter() - self._t0

    @property
    def milliseconds(self) -> float:
        return round(self.seconds * 1e3, 3)
