"""Normalization, windowing and splits against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from pyrocast.errors import ConfigError
from pyrocast.fields import MONTHS_PER_RUN, VARIABLES, GridSpec, SimulationRun
from pyrocast.preprocess import (CLAMP_HI, CLAMP_LO, NormalizationStats,
                                 assemble, denormalize, fit_stats,
                                 make_windows, network_input, normalize,
                                 normalize_run, split_for_training)
from pyrocast.synthgen import (ADAPTATION_RUN, TRAIN_RUNS, ScenarioConfig,
                               generate_suite)

from oracles import running_min_max, slice_windows


def constant_run(value: float, grid=GridSpec(4, 4)) -> SimulationRun:
    data = {v: np.full((MONTHS_PER_RUN, *grid.shape), value, np.float32)
            for v in VARIABLES}
    return SimulationRun("const", grid, data)


@pytest.fixture(scope="module")
def small_suite():
    return generate_suite(ScenarioConfig(grid=GridSpec(8, 12), seed=17))


class TestFitStats:
    def test_constant_run(self):
        stats = fit_stats([constant_run(5.0)])
        assert stats.ranges["burnt_area"] == (5.0, 5.0)

    def test_known_range(self):
        run = constant_run(0.0)
        run.data["temperature"][3, 1, 1] = 2.0
        stats = fit_stats([run])
        assert stats.ranges["temperature"] == (0.0, 2.0)

    def test_matches_linear_scan_oracle(self, small_suite):
        runs, _ = small_suite
        train = [runs[r] for r in TRAIN_RUNS]
        stats = fit_stats(train)
        for v in VARIABLES:
            stacked = np.concatenate([r.series(v).ravel() for r in train])
            lo, hi = running_min_max(stacked)
            assert stats.ranges[v][0] == pytest.approx(lo, abs=1e-9)
            assert stats.ranges[v][1] == pytest.approx(hi, abs=1e-9)

    def test_empty_input_rejected(self):
        with pytest.raises(ConfigError):
            fit_stats([])

    def test_leakage_guard(self, small_suite):
        # Including the shifted run must move at least one bound.
        runs, _ = small_suite
        train_stats = fit_stats([runs[r] for r in TRAIN_RUNS])
        all_stats = fit_stats([runs[r] for r in (*TRAIN_RUNS, "r4", ADAPTATION_RUN)])
        assert train_stats.ranges != all_stats.ranges

    def test_json_round_trip(self, small_suite):
        runs, _ = small_suite
        stats = fit_stats([runs[r] for r in TRAIN_RUNS])
        again = NormalizationStats.from_dict(stats.to_dict())
        assert again.ranges == stats.ranges


class TestNormalize:
    def test_midpoint(self):
        assert normalize(np.array(1.0), 0.0, 2.0) == pytest.approx(0.5)

    def test_boundaries(self):
        assert normalize(np.array(0.0), 0.0, 2.0) == 0.0
        assert normalize(np.array(2.0), 0.0, 2.0) == 1.0

    def test_round_trip_within_tolerance(self, rng):
        vals = rng.uniform(3.0, 9.0, size=(5, 5)).astype(np.float32)
        back = denormalize(normalize(vals, 3.0, 9.0), 3.0, 9.0)
        np.testing.assert_allclose(back, vals, atol=1e-6 * 9.0)

    def test_out_of_range_clamped(self):
        out = normalize(np.array([-10.0, 10.0]), 0.0, 1.0)
        np.testing.assert_allclose(out, [CLAMP_LO, CLAMP_HI])

    def test_degenerate_range_names_variable(self):
        with pytest.raises(ConfigError, match="soil_moisture"):
            normalize(np.array(1.0), 2.0, 2.0, variable="soil_moisture")

    def test_training_data_lands_in_unit_interval(self, small_suite):
        runs, _ = small_suite
        train = [runs[r] for r in TRAIN_RUNS]
        stats = fit_stats(train)
        for run in train:
            arrays = normalize_run(run, stats)
            for v in VARIABLES:
                assert arrays[v].min() >= 0.0
                assert arrays[v].max() <= 1.0

    def test_network_input_clips_to_unit(self):
        out = network_input(np.array([CLAMP_LO, 0.5, CLAMP_HI]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


class TestWindows:
    def test_window_counts(self, small_suite):
        runs, _ = small_suite
        assert len(make_windows(runs["r1"], 12, 12)) == 337
        assert len(make_windows(runs["r1"], 1, 1)) == 359

    def test_asymmetric_lengths_rejected(self, small_suite):
        runs, _ = small_suite
        with pytest.raises(ConfigError):
            make_windows(runs["r1"], 3, 6)

    def test_too_long_rejected(self):
        series = {v: np.zeros((10, 4, 4), np.float32) for v in VARIABLES}
        with pytest.raises(ConfigError):
            make_windows(series, 6, 6)

    def test_contents_match_slicing_oracle(self, small_suite):
        runs, _ = small_suite
        run = runs["r2"]
        windows = make_windows(run, 3, 3, variables=("burnt_area", "lai"))
        series = np.stack([run.series("burnt_area"), run.series("lai")], axis=1)
        expected = slice_windows(series, 3, 3)
        assert len(windows) == len(expected)
        for idx in (0, 17, 170, len(windows) - 1):
            np.testing.assert_array_equal(windows[idx].inputs, expected[idx][0])
            np.testing.assert_array_equal(windows[idx].targets, expected[idx][1])

    def test_assemble_shapes(self, small_suite):
        runs, _ = small_suite
        windows = make_windows(runs["r1"], 6, 6)[:10]
        xs, ys = assemble(windows)
        assert xs.shape == (10, 6, 4, 8, 12)
        assert ys.shape == (10, 6, 4, 8, 12)

    def test_windows_never_cross_runs(self, small_suite):
        runs, _ = small_suite
        for rid in ("r1", "r2"):
            for w in make_windows(runs[rid], 12, 12):
                assert w.run_id == rid
                assert w.start + w.p + w.n <= MONTHS_PER_RUN


class TestSplit:
    def test_counts_80_20(self):
        train, held = split_for_training(list(range(100)), 0.2)
        assert len(train) == 80 and len(held) == 20

    def test_rounded_holdout(self):
        train, held = split_for_training(list(range(337)), 0.2)
        assert len(held) == 67
        assert len(train) == 270

    def test_deterministic(self):
        a = split_for_training(list(range(50)), 0.2, seed=3)
        b = split_for_training(list(range(50)), 0.2, seed=3)
        assert a == b

    def test_disjoint_and_exhaustive(self):
        items = list(range(41))
        train, held = split_for_training(items, 0.2, seed=9)
        assert sorted(train + held) == items
        assert not set(train) & set(held)

    def test_too_few_rejected(self):
        with pytest.raises(ConfigError):
            split_for_training([1, 2, 3], 0.2)
