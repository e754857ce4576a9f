"""Compression models: PCA against an SVD oracle, AE/CAE training behaviour."""

from __future__ import annotations

import numpy as np
import pytest

from pyrocast.checkpoint import load_checkpoint, save_checkpoint
from pyrocast.errors import ConfigError, DimensionError
from pyrocast.fields import GridSpec, LandMask
from pyrocast.rom import (ConvAutoencoder, DenseAutoencoder, PcaModel,
                          _pool_plan, compression_percent, compression_ratio,
                          encoder_from_checkpoint, evaluate_encoder,
                          fit_autoencoder)
from pyrocast.training import TrainConfig

from oracles import svd_reconstruction

GRID8 = GridSpec(8, 8)


def random_fields(rng, n, grid=GRID8):
    return rng.uniform(0, 1, (n, *grid.shape)).astype(np.float32)


class TestPca:
    def test_rank_one_dataset_exact_with_d1(self, rng):
        pattern = rng.uniform(0, 1, GRID8.shape)
        weights = rng.uniform(0.5, 2.0, 10)
        fields = np.stack([w * pattern for w in weights])
        model = PcaModel.fit(fields, 1, "lai", GRID8)
        recon = model.decode(model.encode(fields))
        assert np.abs(recon - fields).max() < 1e-5

    def test_full_basis_lossless(self, rng):
        fields = random_fields(rng, 6)
        model = PcaModel.fit(fields, 6, "lai", GRID8)
        recon = model.decode(model.encode(fields))
        assert np.abs(recon - fields).max() < 1e-4

    def test_matches_truncated_svd_oracle(self, rng):
        fields = random_fields(rng, 10)
        model = PcaModel.fit(fields, 4, "burnt_area", GRID8)
        recon = model.decode(model.encode(fields))
        expected = svd_reconstruction(fields, 4)
        err_model = float(np.mean((recon - fields) ** 2))
        err_oracle = float(np.mean((expected - fields) ** 2))
        assert err_model == pytest.approx(err_oracle, abs=1e-5)
        assert np.abs(recon - expected).max() < 1e-5

    def test_components_orthonormal(self, rng):
        model = PcaModel.fit(random_fields(rng, 12), 5, "lai", GRID8)
        gram = model.components @ model.components.T
        assert np.abs(gram - np.eye(5)).max() < 1e-5

    def test_zero_latent_decodes_to_mean(self, rng):
        fields = random_fields(rng, 9)
        model = PcaModel.fit(fields, 3, "lai", GRID8)
        mean_field = model.decode(np.zeros(3))[0]
        np.testing.assert_allclose(mean_field, fields.mean(axis=0), atol=1e-6)

    def test_latent_too_large_rejected(self, rng):
        with pytest.raises(ConfigError):
            PcaModel.fit(random_fields(rng, 5), 6, "lai", GRID8)

    def test_grid_mismatch_rejected(self, rng):
        model = PcaModel.fit(random_fields(rng, 5), 2, "lai", GRID8)
        with pytest.raises(DimensionError):
            model.encode(rng.uniform(0, 1, (3, 4, 4)))

    def test_checkpoint_round_trip(self, rng, tmp_path):
        fields = random_fields(rng, 8)
        model = PcaModel.fit(fields, 3, "temperature", GRID8)
        path = tmp_path / "pca.ckpt"
        save_checkpoint(path, model.to_checkpoint())
        again = encoder_from_checkpoint(load_checkpoint(path))
        # float32 storage quantizes the float64 basis
        np.testing.assert_allclose(again.decode(again.encode(fields)),
                                   model.decode(model.encode(fields)), atol=1e-4)


class TestPoolPlan:
    def test_desk_grid_pools_twice(self):
        plan, bottom = _pool_plan(GridSpec(28, 48), 3)
        assert plan == [True, True, False]
        assert bottom == (7, 12)

    def test_full_grid_pools_three_times(self):
        plan, bottom = _pool_plan(GridSpec(112, 192), 3)
        assert plan == [True, True, True]
        assert bottom == (14, 24)

    def test_odd_after_first_halving(self):
        plan, bottom = _pool_plan(GridSpec(6, 6), 3)
        assert plan == [True, False, False]
        assert bottom == (3, 3)


class TestAutoencoders:
    def test_constant_dataset_learns_bias(self, rng):
        fields = np.full((8, 8, 8), 0.35, np.float32)
        cfg = TrainConfig(epochs=300, batch_size=8, lr=5e-3, patience=40, seed=1)
        model, history = fit_autoencoder(fields, 3, "ae", "lai", GRID8, cfg)
        recon = model.decode(model.encode(fields))
        assert float(np.mean((recon - fields) ** 2)) < 1e-6
        assert history.epochs_run <= 300

    def test_best_checkpoint_losses_non_increasing(self, rng):
        fields = random_fields(rng, 20)
        cfg = TrainConfig(epochs=30, batch_size=8, lr=2e-3, patience=10, seed=2)
        _, history = fit_autoencoder(fields, 4, "ae", "lai", GRID8, cfg)
        best = history.best_sequence()
        assert best, "at least the first epoch must improve on +inf"
        assert all(b2 < b1 for b1, b2 in zip(best, best[1:]))

    def test_cae_shapes_round_trip(self, rng):
        model = ConvAutoencoder("burnt_area", GridSpec(8, 12), 5,
                                filters=(6, 5, 4), dense_width=16, seed=3)
        fields = rng.uniform(0, 1, (4, 8, 12)).astype(np.float32)
        latents = model.encode(fields)
        assert latents.shape == (4, 5)
        recon = model.decode(latents)
        assert recon.shape == (4, 8, 12)
        assert recon.min() >= 0.0 and recon.max() <= 1.0

    def test_cae_trains_on_smooth_fields(self, rng):
        # Low-rank smooth data: a handful of epochs must already beat the
        # untrained reconstruction by a wide margin.
        base = rng.uniform(0.2, 0.8, GRID8.shape)
        phase = rng.uniform(0, 2 * np.pi, 24)
        fields = np.stack([base * (0.6 + 0.4 * np.sin(p)) for p in phase]
                          ).astype(np.float32)
        cfg = TrainConfig(epochs=60, batch_size=8, lr=3e-3, patience=15, seed=4)
        model, _ = fit_autoencoder(fields, 3, "cae", "lai", GRID8, cfg,
                                   filters=(8, 6, 4), dense_width=16)
        err = float(np.mean((model.decode(model.encode(fields)) - fields) ** 2))
        untrained = ConvAutoencoder("lai", GRID8, 3, filters=(8, 6, 4),
                                    dense_width=16, seed=99)
        err0 = float(np.mean((untrained.decode(untrained.encode(fields)) - fields) ** 2))
        assert err < err0 / 4

    def test_unknown_kind_rejected(self, rng):
        with pytest.raises(ConfigError):
            fit_autoencoder(random_fields(rng, 6), 2, "vae", "lai", GRID8,
                            TrainConfig(epochs=1))

    def test_cae_checkpoint_round_trip(self, rng, tmp_path):
        model = ConvAutoencoder("soil_moisture", GridSpec(8, 12), 4,
                                filters=(5, 4, 3), dense_width=12, seed=7)
        fields = rng.uniform(0, 1, (3, 8, 12)).astype(np.float32)
        path = tmp_path / "cae.ckpt"
        save_checkpoint(path, model.to_checkpoint())
        again = encoder_from_checkpoint(load_checkpoint(path))
        np.testing.assert_array_equal(again.encode(fields), model.encode(fields))

    def test_ae_checkpoint_round_trip(self, rng, tmp_path):
        model = DenseAutoencoder("lai", GRID8, 4, hidden=32, seed=5)
        fields = random_fields(rng, 3)
        path = tmp_path / "ae.ckpt"
        save_checkpoint(path, model.to_checkpoint())
        again = encoder_from_checkpoint(load_checkpoint(path))
        np.testing.assert_array_equal(again.encode(fields), model.encode(fields))


class TestEvaluateEncoder:
    def test_perfect_model_scores_perfectly(self, rng):
        class Identity:
            kind = "pca"
            variable = "lai"
            grid = GRID8
            d = GRID8.cells

            def encode(self, fields):
                return fields.reshape(fields.shape[0], -1)

            def decode(self, latents, mask=None):
                from pyrocast.fields import apply_mask
                out = latents.reshape(latents.shape[0], *GRID8.shape)
                return apply_mask(out, mask) if mask is not None else out

        mask = LandMask(GRID8, rng.random(GRID8.shape) < 0.6)
        fields = random_fields(rng, 5)
        report = evaluate_encoder(Identity(), fields, mask)
        assert report["aep"] == 0.0
        assert report["ssim"] == pytest.approx(1.0, abs=1e-9)
        assert report["seconds"] > 0.0

    def test_compression_helpers(self):
        assert compression_ratio(15, GridSpec(112, 192)) == pytest.approx(15 / 21504)
        assert compression_percent(15, GridSpec(112, 192)) == "0.07%"


class TestMaskedTraining:
    """Sparse targets (mostly ocean zeros) push an unmasked sigmoid decoder
    into saturation; the land-restricted loss has to stay out of that trap."""

    @pytest.fixture()
    def sparse_suite(self, rng):
        grid = GridSpec(12, 16)
        land = np.zeros(grid.shape, dtype=bool)
        land[3:10, 4:13] = True
        mask = LandMask(grid, land)
        base = rng.uniform(0.2, 0.8, grid.shape).astype(np.float32)
        season = 0.25 * np.sin(2 * np.pi * np.arange(80) / 12.0)
        fields = np.clip(base[None] + season[:, None, None], 0.05, 0.95)
        fields = np.where(land, fields, 0.0).astype(np.float32)
        return grid, mask, fields

    def test_cae_beats_all_zero_floor(self, sparse_suite):
        grid, mask, fields = sparse_suite
        config = TrainConfig(epochs=30, batch_size=16, lr=2e-3, patience=30, seed=3)
        model, _ = fit_autoencoder(fields, 6, "cae", "burnt_area", grid, config,
                                   filters=(8, 6, 4), dense_width=24, mask=mask)
        recon = model.decode(model.encode(fields), mask)
        land_mse = float(np.mean((recon - fields)[:, mask.land] ** 2))
        zero_floor = float(np.mean(fields[:, mask.land] ** 2))
        assert recon[:, mask.land].mean() > 0.05
        assert land_mse < 0.25 * zero_floor

    def test_ae_masked_loss_runs(self, sparse_suite):
        grid, mask, fields = sparse_suite
        config = TrainConfig(epochs=10, batch_size=16, lr=2e-3, patience=10, seed=3)
        model, history = fit_autoencoder(fields, 6, "ae", "burnt_area", grid,
                                         config, hidden=32, mask=mask)
        assert history.best_loss < history.records[0].holdout_loss
        assert model.decode(model.encode(fields[:2])).shape == (2, *grid.shape)
