"""Seeded parameter initialization helpers."""

from __future__ import annotations

import numpy as np


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) float32 array."""
    limit = 1.0 / np.sqrt(max(fan_in, 1))
    return ((rng.random(shape) * 2.0 - 1.0) * limit).astype(np.float32)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...],
               fan_in: int, slope: float = 0.1) -> np.ndarray:
    """Variance-preserving uniform init for leaky-relu layers.

    Deep stacks under the plain 1/sqrt(fan) rule attenuate activations by
    roughly 3x per layer, which starves the first layers of gradient.
    """
    gain = np.sqrt(2.0 / (1.0 + slope * slope))
    limit = gain * np.sqrt(3.0 / max(fan_in, 1))
    return ((rng.random(shape) * 2.0 - 1.0) * limit).astype(np.float32)


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-sqrt(6/(fan_in+fan_out)), +...) for linear or sigmoid layers."""
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return ((rng.random(shape) * 2.0 - 1.0) * limit).astype(np.float32)


def zeros(shape: tuple[int, ...]) -> np.ndarray:
    return np.zeros(shape, dtype=np.float32)
