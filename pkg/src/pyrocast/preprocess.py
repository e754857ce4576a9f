"""Normalization statistics, sliding windows and training splits.

Min/max statistics always come from the training runs alone and are stored
per variable.  Normalized training data lands in [0, 1] by construction;
values from other runs that fall outside the training range are clamped to
[-0.05, 1.05] here and clipped to [0, 1] again where tensors enter a network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .fields import VARIABLES, SimulationRun

CLAMP_LO = -0.05
CLAMP_HI = 1.05


@dataclass(frozen=True)
class NormalizationStats:
    """Per-variable (min, max) ranges measured on the training runs."""

    ranges: dict[str, tuple[float, float]]

    def to_dict(self) -> dict:
        return {k: [float(a), float(b)] for k, (a, b) in self.ranges.items()}

    @staticmethod
    def from_dict(d: dict) -> "NormalizationStats":
        return NormalizationStats({k: (float(v[0]), float(v[1])) for k, v in d.items()})


def fit_stats(train_runs: list[SimulationRun],
              variables: tuple[str, ...] = VARIABLES) -> NormalizationStats:
    """Global per-variable min/max over every pixel of the training runs."""
    if not train_runs:
        raise ConfigError("fit_stats needs at least one training run")
    ranges = {}
    for var in variables:
        lo = min(float(run.series(var).min()) for run in train_runs)
        hi = max(float(run.series(var).max()) for run in train_runs)
        ranges[var] = (lo, hi)
    return NormalizationStats(ranges)


def normalize(values: np.ndarray, vmin: float, vmax: float,
              variable: str = "?") -> np.ndarray:
    """(x - min) / (max - min), clamped to [-0.05, 1.05]."""
    if vmax <= vmin:
        raise ConfigError(
            f"degenerate normalization range for variable {variable}: "
            f"min == max == {vmin}")
    scaled = (np.asarray(values, np.float32) - np.float32(vmin)) / np.float32(vmax - vmin)
    return np.clip(scaled, np.float32(CLAMP_LO), np.float32(CLAMP_HI))


def denormalize(values: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    return np.asarray(values, np.float32) * np.float32(vmax - vmin) + np.float32(vmin)


def normalize_run(run: SimulationRun, stats: NormalizationStats) -> dict[str, np.ndarray]:
    """All four variables of one run, normalized."""
    out = {}
    for var, (lo, hi) in stats.ranges.items():
        out[var] = normalize(run.series(var), lo, hi, variable=var)
    return out


def network_input(values: np.ndarray) -> np.ndarray:
    """Final clip to [0, 1] applied where data enters a network."""
    return np.clip(np.asarray(values, np.float32), 0.0, 1.0)


# ---------------------------------------------------------------------------
# windows


@dataclass
class SequenceWindow:
    """A (p input, n target) pair of consecutive months, materialized lazily.

    The window keeps references into the full per-variable series instead of
    copies; thousands of field-space windows would otherwise not fit in
    memory at once.
    """

    run_id: str
    start: int
    p: int
    n: int
    variables: tuple[str, ...]
    _source: dict[str, np.ndarray]

    @property
    def inputs(self) -> np.ndarray:
        """(p, n_variables, H, W) float32."""
        s = self.start
        return np.stack([self._source[v][s:s + self.p] for v in self.variables], axis=1)

    @property
    def targets(self) -> np.ndarray:
        """(n, n_variables, H, W) float32."""
        s = self.start + self.p
        return np.stack([self._source[v][s:s + self.n] for v in self.variables], axis=1)


def make_windows(run: SimulationRun | dict[str, np.ndarray], p: int, n: int,
                 variables: tuple[str, ...] = VARIABLES,
                 run_id: str = "?") -> list[SequenceWindow]:
    """Every stride-1 window of a single run; never crosses run boundaries."""
    if p < 1 or n < 1:
        raise ConfigError(f"window lengths must be positive, got p={p} n={n}")
    if p != n:
        raise ConfigError(f"input and output lengths must match, got p={p} n={n}")
    if isinstance(run, SimulationRun):
        source = {v: run.series(v) for v in variables}
        run_id = run.run_id
    else:
        source = {v: np.asarray(run[v], np.float32) for v in variables}
    months = source[variables[0]].shape[0]
    for v in variables:
        if source[v].shape[0] != months:
            raise DimensionError("window variables must share one series length")
    if p + n > months:
        raise ConfigError(f"p + n = {p + n} exceeds series length {months}")
    return [SequenceWindow(run_id, s, p, n, tuple(variables), source)
            for s in range(months - p - n + 1)]


def assemble(windows: list[SequenceWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (N, p, V, H, W) inputs and (N, n, V, H, W) targets."""
    xs = np.stack([w.inputs for w in windows])
    ys = np.stack([w.targets for w in windows])
    return xs, ys


def split_for_training(windows: list, holdout_fraction: float = 0.2,
                       seed: int = 7) -> tuple[list, list]:
    """Deterministic shuffled split; holdout gets round(fraction * N) items."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ConfigError(f"holdout fraction out of range: {holdout_fraction}")
    if len(windows) < 5:
        raise ConfigError(f"need at least 5 windows to split, got {len(windows)}")
    order = np.random.default_rng(np.random.PCG64(seed)).permutation(len(windows))
    k = round(holdout_fraction * len(windows))
    held = [windows[i] for i in order[:k]]
    kept = [windows[i] for i in order[k:]]
    return kept, held
