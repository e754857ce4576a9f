"""Rollout loop: chaining, counters, timing and cumulative metrics."""

from __future__ import annotations

import time

import numpy as np
import pytest

from pyrocast.convlstm import ConvLstmModel
from pyrocast.errors import ConfigError, DimensionError
from pyrocast.fields import VARIABLES, GridSpec, LandMask
from pyrocast.latentdyn import Seq2SeqModel
from pyrocast.metrics import aep, ssim
from pyrocast.rollout import (CaeLstmSurrogate, ConvLstmSurrogate,
                              RolloutPlan, RolloutResult, cumulative_metrics,
                              run_rollout)
from pyrocast.rom import PcaModel

GRID = GridSpec(8, 8)


class IdentityStub:
    """Echoes its seed window forever; exercises only the loop mechanics."""

    variables = ("burnt_area",)

    def __init__(self, p=12, n=12, delay=0.0):
        self.p = p
        self.n = n
        self.delay = delay

    def begin(self, series, start, drivers):
        self._window = np.asarray(series["burnt_area"][start:start + self.p])

    def predict_next(self, months):
        if self.delay:
            time.sleep(self.delay)
        return self._window.copy()


@pytest.fixture
def series(rng):
    return {v: rng.uniform(0, 1, (360, *GRID.shape)).astype(np.float32)
            for v in VARIABLES}


@pytest.fixture
def mask():
    return LandMask(GRID, np.ones(GRID.shape, bool))


class TestLoop:
    def test_identity_stub_repeats_window(self, series):
        result = run_rollout(IdentityStub(), series, RolloutPlan(horizon=24))
        window = series["burnt_area"][:12]
        np.testing.assert_array_equal(result.predictions[:12], window)
        np.testing.assert_array_equal(result.predictions[12:], window)

    def test_iteration_count_for_30_years(self, series):
        result = run_rollout(IdentityStub(), series, RolloutPlan(horizon=348))
        assert result.iterations == 29
        assert result.predictions.shape == (348, *GRID.shape)
        np.testing.assert_array_equal(result.month_indices,
                                      np.arange(12, 360))

    def test_ragged_horizon_rejected(self, series):
        with pytest.raises(ConfigError):
            run_rollout(IdentityStub(), series, RolloutPlan(horizon=20))

    def test_missing_variable_rejected(self, series):
        del series["burnt_area"]
        with pytest.raises(ConfigError):
            run_rollout(IdentityStub(), series, RolloutPlan(horizon=12))

    def test_short_series_rejected(self, series):
        short = {v: s[:10] for v, s in series.items()}
        with pytest.raises(DimensionError):
            run_rollout(IdentityStub(), short, RolloutPlan(horizon=12))

    def test_total_time_matches_iteration_sum(self, series):
        result = run_rollout(IdentityStub(delay=0.02), series,
                             RolloutPlan(horizon=36))
        assert sum(result.iteration_seconds) == pytest.approx(
            result.seconds, rel=0.05)

    def test_start_offset(self, series):
        result = run_rollout(IdentityStub(), series,
                             RolloutPlan(horizon=12, start=48))
        np.testing.assert_array_equal(result.predictions,
                                      series["burnt_area"][48:60])
        np.testing.assert_array_equal(result.month_indices, np.arange(60, 72))


class TestCumulativeMetrics:
    def test_perfect_predictions(self, series, mask):
        ref = series["burnt_area"][:24]
        out = cumulative_metrics(ref, ref, mask)
        np.testing.assert_array_equal(out["aep"], 0.0)
        np.testing.assert_array_equal(out["cum_aep"], 0.0)
        assert out["mean_ssim"] == pytest.approx(1.0, abs=1e-9)

    def test_cumulative_non_decreasing(self, rng, series, mask):
        pred = rng.uniform(0, 1, (24, *GRID.shape))
        out = cumulative_metrics(pred, series["burnt_area"][:24], mask)
        assert np.all(np.diff(out["cum_aep"]) >= 0)
        assert out["cum_aep"][-1] == pytest.approx(out["aep"].sum())

    def test_matches_metric_module_frame_by_frame(self, rng, series, mask):
        pred = rng.uniform(0, 1, (6, *GRID.shape))
        ref = series["burnt_area"][:6]
        out = cumulative_metrics(pred, ref, mask)
        for t in range(6):
            assert out["aep"][t] == aep(pred[t], ref[t], mask)
            assert out["ssim"][t] == ssim(pred[t], ref[t], mask)

    def test_length_mismatch_rejected(self, series, mask):
        with pytest.raises(DimensionError):
            cumulative_metrics(series["burnt_area"][:5],
                               series["burnt_area"][:6], mask)


def pca_encoders(series, d=3):
    return {v: PcaModel.fit(series[v][:40], d, v, GRID) for v in VARIABLES}


class TestCaeLstmSurrogate:
    def test_encode_once_and_decode_budget(self, series, mask):
        encoders = pca_encoders(series)
        seq = Seq2SeqModel("joint", 12, 6, 6, enc_hidden=8, dec_hidden=6, seed=0)
        surrogate = CaeLstmSurrogate(seq, encoders, mask)
        result = run_rollout(surrogate, series, RolloutPlan(horizon=24))
        assert surrogate.encode_calls == 4
        assert surrogate.decoded_frames == 24
        assert result.predictions.shape == (24, *GRID.shape)
        assert result.predictions.min() >= 0.0
        assert result.predictions.max() <= 1.0

    def test_single_mode_uses_one_encoder(self, series, mask):
        encoders = {"burnt_area": PcaModel.fit(series["burnt_area"][:40], 3,
                                               "burnt_area", GRID)}
        seq = Seq2SeqModel("single", 3, 6, 6, enc_hidden=8, dec_hidden=6, seed=1)
        surrogate = CaeLstmSurrogate(seq, encoders, mask)
        run_rollout(surrogate, series, RolloutPlan(horizon=12))
        assert surrogate.encode_calls == 1

    def test_oracle_drivers_change_predictions(self, series, mask):
        encoders = pca_encoders(series)
        seq = Seq2SeqModel("joint", 12, 6, 6, enc_hidden=8, dec_hidden=6, seed=2)
        free = run_rollout(CaeLstmSurrogate(seq, encoders, mask), series,
                           RolloutPlan(horizon=24, drivers="predicted"))
        driven = run_rollout(CaeLstmSurrogate(seq, encoders, mask), series,
                             RolloutPlan(horizon=24, drivers="oracle"))
        # first iteration shares the ground-truth seed window
        np.testing.assert_allclose(driven.predictions[:6], free.predictions[:6],
                                   atol=1e-6)
        assert np.abs(driven.predictions[6:] - free.predictions[6:]).max() > 1e-6

    def test_width_mismatch_rejected(self, series, mask):
        encoders = pca_encoders(series)
        seq = Seq2SeqModel("joint", 10, 6, 6)
        with pytest.raises(ConfigError):
            CaeLstmSurrogate(seq, encoders, mask)

    def test_rollout_deterministic(self, series, mask):
        encoders = pca_encoders(series)
        seq = Seq2SeqModel("joint", 12, 6, 6, seed=3)
        a = run_rollout(CaeLstmSurrogate(seq, encoders, mask), series,
                        RolloutPlan(horizon=12))
        b = run_rollout(CaeLstmSurrogate(seq, encoders, mask), series,
                        RolloutPlan(horizon=12))
        np.testing.assert_array_equal(a.predictions, b.predictions)


class TestConvLstmSurrogate:
    def test_joint_rollout_shapes_and_mask(self, rng, series):
        land = rng.random(GRID.shape) < 0.7
        mask = LandMask(GRID, land)
        model = ConvLstmModel("joint", 3, 3, hidden=2, seed=4)
        result = run_rollout(ConvLstmSurrogate(model, mask), series,
                             RolloutPlan(horizon=12))
        assert result.predictions.shape == (12, *GRID.shape)
        assert np.all(result.predictions[:, ~land] == 0.0)

    def test_oracle_drivers_change_predictions(self, series, mask):
        model = ConvLstmModel("joint", 3, 3, hidden=2, seed=5)
        free = run_rollout(ConvLstmSurrogate(model, mask), series,
                           RolloutPlan(horizon=12, drivers="predicted"))
        driven = run_rollout(ConvLstmSurrogate(model, mask), series,
                             RolloutPlan(horizon=12, drivers="oracle"))
        assert np.abs(free.predictions[3:] - driven.predictions[3:]).max() > 1e-6

    def test_single_mode_needs_only_burnt(self, series, mask):
        model = ConvLstmModel("single", 3, 3, hidden=2, seed=6)
        only_burnt = {"burnt_area": series["burnt_area"]}
        result = run_rollout(ConvLstmSurrogate(model, mask), only_burnt,
                             RolloutPlan(horizon=6))
        assert result.predictions.shape == (6, *GRID.shape)
