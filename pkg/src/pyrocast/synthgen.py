"""Deterministic synthetic fire-climate scenarios for desk-scale testing.

All randomness flows from one PCG64 generator seeded by the scenario config;
identical configs reproduce every run bit for bit.  The five generated runs
mimic a family of initial-condition ensemble members: r1..r3 for training,
r4 for validation under the same climate regime (new noise, new seasonal
phase), and r5 as a warmer out-of-distribution member with a steeper trend
and an anthropogenic ignition component.

Construction rules the tests rely on:

* temperature = base pattern + seasonal cycle + linear trend + noise, so with
  the noise and trend knobs at zero, months t and t+12 are identical;
* soil moisture swings in anti-phase with the seasonal cycle;
* vegetation (LAI) evolves on a slow 144-month mode;
* burnt area is a smooth function of the other three, monotone increasing in
  temperature and decreasing in soil moisture, never negative.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .fields import GridSpec, LandMask, SimulationRun, apply_mask

TRAIN_RUNS = ("r1", "r2", "r3")
VALIDATION_RUN = "r4"
ADAPTATION_RUN = "r5"
RUN_IDS = (*TRAIN_RUNS, VALIDATION_RUN, ADAPTATION_RUN)

_PHASES = {"r1": 0.0, "r2": 4.0, "r3": 8.0, "r4": 2.5, "r5": 6.0}


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one synthetic scenario suite."""

    grid: GridSpec
    seed: int = 2024
    land_fraction: float = 7771 / 21504
    months: int = 360
    noise_scale: float = 1.0
    trend_per_decade: float = 0.25
    shift_amplitude: float = 2.0   # r5 warm shift, in seasonal-amplitude units
    shift_trend: float = 0.6       # r5 trend per decade
    ignition_boost: float = 1.25   # r5 anthropogenic ignition multiplier

    def __post_init__(self) -> None:
        if not 0.0 < self.land_fraction <= 1.0:
            raise ConfigError(f"land_fraction must be in (0, 1], got {self.land_fraction}")
        if self.months % 12:
            raise ConfigError("months must cover whole years")


def _smooth(rng: np.random.Generator, shape: tuple[int, ...], passes: int = 12) -> np.ndarray:
    """White noise blurred into coherent blobs over the last two axes."""
    f = rng.standard_normal(shape)
    for _ in range(passes):
        acc = f.copy()
        for axis in (-2, -1):
            acc = acc + np.roll(f, 1, axis=axis) + np.roll(f, -1, axis=axis)
        f = acc / 5.0
    f -= f.mean()
    sd = f.std()
    return (f / sd if sd > 0 else f).astype(np.float64)


def generate_mask(grid: GridSpec, land_fraction: float, seed: int) -> LandMask:
    """Pseudo-continental mask holding exactly round(fraction * cells) land cells."""
    if not 0.0 < land_fraction <= 1.0:
        raise ConfigError(f"land_fraction must be in (0, 1], got {land_fraction}")
    rng = np.random.default_rng(np.random.PCG64(seed))
    relief = _smooth(rng, grid.shape, passes=16)
    k = max(1, round(land_fraction * grid.cells))
    flat = relief.ravel()
    keep = np.argpartition(flat, -k)[-k:]
    land = np.zeros(grid.cells, dtype=bool)
    land[keep] = True
    return LandMask(grid, land.reshape(grid.shape))


def _regime(rng: np.random.Generator, grid: GridSpec) -> dict[str, np.ndarray]:
    """Spatial base patterns shared by every member of a suite."""
    return {
        "t_base": 0.8 + 0.6 * _smooth(rng, grid.shape),
        "t_amp": 1.0 + 0.35 * _smooth(rng, grid.shape),
        "m_base": 0.55 + 0.18 * _smooth(rng, grid.shape),
        "m_amp": 0.30 + 0.10 * _smooth(rng, grid.shape),
        "v_base": 1.6 + 0.8 * _smooth(rng, grid.shape),
    }


def _season(months: int, phase: float, period: int = 12) -> np.ndarray:
    # computed from t mod period so noise-free years repeat bit for bit
    t = np.arange(months, dtype=np.float64) % period
    return np.sin(2.0 * np.pi * (t + phase) / period)


def _expit(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def generate_run(config: ScenarioConfig, run_id: str, mask: LandMask,
                 regime: dict[str, np.ndarray], noise_seed: int,
                 shifted: bool = False) -> SimulationRun:
    """One 360-month member.  ``shifted`` applies the r5 warm regime change."""
    rng = np.random.default_rng(np.random.PCG64(noise_seed))
    months = config.months
    grid = config.grid
    phase = _PHASES.get(run_id, 0.0)
    ns = config.noise_scale

    season = _season(months, phase)[:, None, None]
    decade = (np.arange(months, dtype=np.float64) / 120.0)[:, None, None]
    trend = (config.shift_trend if shifted else config.trend_per_decade) * decade
    shift = config.shift_amplitude if shifted else 0.0

    temp = (regime["t_base"][None] + regime["t_amp"][None] * season + trend + shift
            + ns * 0.05 * _smooth(rng, (months, *grid.shape), passes=6))
    moist = (regime["m_base"][None] - regime["m_amp"][None] * season - 0.15 * trend
             + ns * 0.04 * _smooth(rng, (months, *grid.shape), passes=6))
    moist = np.maximum(moist, 0.02)

    slow = _season(months, phase * 7.0, period=144)[:, None, None]
    veg = regime["v_base"][None] * (1.0 + 0.25 * slow)
    if ns > 0.0:
        ar = np.empty((months, *grid.shape))
        drive = 0.03 * ns * _smooth(rng, (months, *grid.shape), passes=6)
        state = np.zeros(grid.shape)
        for t in range(months):
            state = 0.9 * state + drive[t]
            ar[t] = state
        veg = veg + ar
    veg = np.maximum(veg, 0.0)

    ignition = config.ignition_boost if shifted else 1.0
    flammability = _expit(3.0 * (temp - 1.0)) * _expit(4.0 * (0.55 - moist))
    fuel = 0.25 + 0.75 * np.minimum(veg / 2.4, 1.5)
    burnt = 0.05 * ignition * flammability * fuel
    burnt = burnt + ns * 0.0015 * _smooth(rng, (months, *grid.shape), passes=4)
    burnt = np.maximum(burnt, 0.0)

    data = {
        "burnt_area": apply_mask(burnt, mask),
        "lai": apply_mask(veg, mask),
        "soil_moisture": apply_mask(moist, mask),
        "temperature": apply_mask(temp, mask),
    }
    metadata = {
        "run_id": run_id,
        "ignition": "natural+anthropogenic" if shifted else "natural",
        "role": ("adaptation" if run_id == ADAPTATION_RUN
                 else "validation" if run_id == VALIDATION_RUN else "train"),
        "seasonal_phase_months": phase,
        "description": "synthetic fire-climate ensemble member",
    }
    return SimulationRun(run_id, grid, data, metadata)


def generate_suite(config: ScenarioConfig) -> tuple[dict[str, SimulationRun], LandMask]:
    """All five members plus the shared mask, keyed by run id."""
    root = np.random.SeedSequence(config.seed)
    mask_seed, regime_seed, *run_seeds = [
        int(s.generate_state(1)[0]) for s in root.spawn(2 + len(RUN_IDS))]
    mask = generate_mask(config.grid, config.land_fraction, mask_seed)
    regime = _regime(np.random.default_rng(np.random.PCG64(regime_seed)), config.grid)
    runs = {}
    for run_id, seed in zip(RUN_IDS, run_seeds):
        runs[run_id] = generate_run(config, run_id, mask, regime, seed,
                                    shifted=run_id == ADAPTATION_RUN)
    return runs, mask


def desk_config(seed: int = 2024) -> ScenarioConfig:
    """Quarter-resolution grid used across the test-suite."""
    return ScenarioConfig(grid=GridSpec(28, 48), seed=seed)


def full_scale_config(seed: int = 2024) -> ScenarioConfig:
    """The 112x192 production grid (land mask sized to 7771 cells)."""
    return ScenarioConfig(grid=GridSpec(112, 192), seed=seed)
