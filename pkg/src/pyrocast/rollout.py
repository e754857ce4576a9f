"""Autoregressive long-horizon prediction and its per-step bookkeeping.

A rollout seeds a surrogate with p consecutive ground-truth months and then
chains forecasts: each iteration predicts n months and those predictions
(or, under the oracle driver policy, the reference values of the non-burnt
variables) form the next input window.  Both surrogate families implement
the same two-method protocol, ``begin`` and ``predict_next``, so the loop
and its timing instrumentation are shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .fields import VARIABLES, LandMask
from .metrics import Stopwatch, aep, ssim

DRIVER_POLICIES = ("predicted", "oracle")


@dataclass(frozen=True)
class RolloutPlan:
    horizon: int
    drivers: str = "predicted"
    start: int = 0

    def __post_init__(self) -> None:
        if self.drivers not in DRIVER_POLICIES:
            raise ConfigError(
                f"drivers must be one of {DRIVER_POLICIES}, got {self.drivers!r}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.start < 0:
            raise ConfigError(f"start must be non-negative, got {self.start}")


@dataclass
class RolloutResult:
    predictions: np.ndarray            # (horizon, H, W) normalized burnt area
    month_indices: np.ndarray          # 0-based month index of every frame
    iteration_seconds: list[float]
    seconds: float
    iterations: int


def _check_series(series: dict[str, np.ndarray], needed: tuple[str, ...],
                  months_required: int) -> int:
    lengths = set()
    for v in needed:
        if v not in series:
            raise ConfigError(f"rollout series is missing variable {v!r}")
        lengths.add(np.asarray(series[v]).shape[0])
    if len(lengths) != 1:
        raise DimensionError(f"variable series lengths differ: {sorted(lengths)}")
    (length,) = lengths
    if length < months_required:
        raise DimensionError(
            f"series covers {length} months but the rollout needs {months_required}")
    return length


def run_rollout(surrogate, series: dict[str, np.ndarray],
                plan: RolloutPlan) -> RolloutResult:
    """Chain surrogate forecasts over ``plan.horizon`` months."""
    p, n = surrogate.p, surrogate.n
    if plan.horizon % n:
        raise ConfigError(
            f"horizon {plan.horizon} is not a multiple of the step length {n}")
    needed = plan.start + p + (plan.horizon if plan.drivers == "oracle" else 0)
    _check_series(series, surrogate.variables, needed)
    surrogate.begin(series, plan.start, plan.drivers)
    frames: list[np.ndarray] = []
    times: list[float] = []
    with Stopwatch() as total:
        for k in range(plan.horizon // n):
            months = np.arange(plan.start + p + k * n,
                               plan.start + p + (k + 1) * n)
            with Stopwatch() as watch:
                frames.append(surrogate.predict_next(months))
            times.append(watch.seconds)
    predictions = np.concatenate(frames, axis=0)
    month_indices = np.arange(plan.start + p, plan.start + p + plan.horizon)
    return RolloutResult(predictions, month_indices, times, total.seconds,
                         plan.horizon // n)


def cumulative_metrics(predictions: np.ndarray, reference: np.ndarray,
                       mask: LandMask) -> dict[str, np.ndarray | float]:
    """Per-month AEP/SSIM plus the running AEP sum over the horizon."""
    predictions = np.asarray(predictions)
    reference = np.asarray(reference)
    if predictions.shape != reference.shape:
        raise DimensionError(
            f"prediction stack {predictions.shape} does not match "
            f"reference {reference.shape}")
    aeps = np.array([aep(p, r, mask) for p, r in zip(predictions, reference)])
    ssims = np.array([ssim(p, r, mask) for p, r in zip(predictions, reference)])
    return {
        "aep": aeps,
        "ssim": ssims,
        "cum_aep": np.cumsum(aeps),
        "mean_aep": float(aeps.mean()),
        "mean_ssim": float(ssims.mean()),
        "mean_cum_aep": float(np.cumsum(aeps).mean()),
    }


# ---------------------------------------------------------------------------
# surrogate adapters


class CaeLstmSurrogate:
    """Latent-space rollout: encode the seed once, iterate, decode on demand."""

    def __init__(self, seq2seq, encoders: dict[str, object], mask: LandMask):
        self.seq2seq = seq2seq
        self.mode = seq2seq.mode
        self.variables = VARIABLES if self.mode == "joint" else (VARIABLES[0],)
        missing = [v for v in self.variables if v not in encoders]
        if missing:
            raise ConfigError(f"missing encoders for variables: {missing}")
        self.encoders = {v: encoders[v] for v in self.variables}
        self.mask = mask
        self.d = self.encoders[VARIABLES[0]].d
        if seq2seq.width != self.d * len(self.variables):
            raise ConfigError(
                f"seq2seq width {seq2seq.width} does not match "
                f"{len(self.variables)} variables x latent {self.d}")
        self.encode_calls = 0
        self.decode_calls = 0
        self.decoded_frames = 0

    @property
    def p(self) -> int:
        return self.seq2seq.p

    @property
    def n(self) -> int:
        return self.seq2seq.n

    def _encode(self, variable: str, fields: np.ndarray) -> np.ndarray:
        self.encode_calls += 1
        return np.asarray(self.encoders[variable].encode(fields), np.float32)

    def begin(self, series: dict[str, np.ndarray], start: int,
              drivers: str) -> None:
        self._drivers = drivers
        self._oracle: dict[str, np.ndarray] = {}
        seed_parts = []
        for v in self.variables:
            if drivers == "oracle":
                whole = self._encode(v, series[v])
                self._oracle[v] = whole
                seed_parts.append(whole[start:start + self.p])
            else:
                seed_parts.append(self._encode(v, series[v][start:start + self.p]))
        self._window = np.concatenate(seed_parts, axis=1)

    def predict_next(self, months: np.ndarray) -> np.ndarray:
        out = self.seq2seq.forecast(self._window)
        burnt = out[:, :self.d]
        if self._drivers == "oracle" and self.mode == "joint":
            rest = [self._oracle[v][months] for v in self.variables[1:]]
            self._window = np.concatenate([burnt, *rest], axis=1)
        else:
            self._window = out
        self.decode_calls += 1
        self.decoded_frames += burnt.shape[0]
        fields = self.encoders[VARIABLES[0]].decode(burnt, self.mask)
        return np.clip(np.asarray(fields, np.float32), 0.0, 1.0)


class ConvLstmSurrogate:
    """Field-space rollout feeding forecasts straight back as inputs."""

    def __init__(self, model, mask: LandMask):
        self.model = model
        self.mode = model.mode
        self.variables = VARIABLES if self.mode == "joint" else (VARIABLES[0],)
        self.mask = mask

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def n(self) -> int:
        return self.model.n

    def begin(self, series: dict[str, np.ndarray], start: int,
              drivers: str) -> None:
        self._drivers = drivers
        self._series = series
        self._window = np.stack(
            [series[v][start:start + self.p] for v in self.variables], axis=1
        ).astype(np.float32)

    def predict_next(self, months: np.ndarray) -> np.ndarray:
        drivers = None
        if self._drivers == "oracle" and self.mode == "joint":
            drivers = np.stack(
                [self._series[v][months[:-1]] for v in self.variables[1:]],
                axis=1).astype(np.float32)
        out = self.model.forecast(self._window, driver_frames=drivers)
        if self._drivers == "oracle" and self.mode == "joint":
            rest = np.stack([self._series[v][months] for v in self.variables[1:]],
                            axis=1).astype(np.float32)
            self._window = np.concatenate([out[:, :1], rest], axis=1)
        else:
            self._window = out
        land = self.mask.land
        return np.where(land, out[:, 0], 0.0).astype(np.float32)
