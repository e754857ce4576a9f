"""End-to-end pipeline on a miniature configuration.

Quality thresholds live in the acceptance suite, which trains at desk
scale; here the models get a couple of epochs and the assertions cover
artifact structure, file contracts and rerun determinism.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from pyrocast.checkpoint import load_checkpoint
from pyrocast.config import (ConvLstmSection, DynSection, FinetuneSection,
                             PipelineConfig, PipelineSection, RomSection,
                             ScenarioSection, config_hash)
from pyrocast.convlstm import ConvLstmModel
from pyrocast.errors import ConfigError
from pyrocast.fields import load_raster
from pyrocast.latentdyn import Seq2SeqModel
from pyrocast.pipeline import Experiment, run_pipeline
from pyrocast.report import read_csv, column
from pyrocast.rom import encoder_from_checkpoint

TINY = PipelineConfig(
    scenario=ScenarioSection(height=16, width=24, seed=5),
    rom=RomSection(latent=8, filters=(6, 5, 4), dense_width=16, ae_hidden=24,
                   epochs=4, batch_size=32, lr=3e-3, patience=4,
                   snapshot_stride=4, seed=1),
    dyn=DynSection(enc_hidden=12, dec_hidden=8, epochs=6, batch_size=32,
                   lr=3e-3, patience=6, max_windows=120, seed=2),
    convlstm=ConvLstmSection(hidden=2, epochs=2, batch_size=4, lr=5e-3,
                             patience=2, max_windows=10, seed=3),
    finetune=FinetuneSection(epochs=2, batch_size=8, seed=4),
    pipeline=PipelineSection(window_lengths=(3, 12), workers=2),
)

METRIC_CSVS = ("encoders.csv", "window_study.csv", "summary.csv",
               "finetune.csv")


@pytest.fixture(scope="module")
def experiment_pair(tmp_path_factory):
    first = run_pipeline(TINY, tmp_path_factory.mktemp("exp") / "a")
    second = run_pipeline(TINY, tmp_path_factory.mktemp("exp") / "b")
    return first, second


@pytest.fixture(scope="module")
def exp(experiment_pair):
    return experiment_pair[0]


class TestArtifacts:
    def test_directory_layout(self, exp):
        for sub in ("runs", "checkpoints", "predictions", "csv", "figures"):
            assert (exp / sub).is_dir()
        assert (exp / "report.md").is_file()
        for name in METRIC_CSVS + ("timings.csv",):
            assert (exp / "csv" / name).is_file()

    def test_config_hash_embedded(self, exp):
        payload = json.loads((exp / "config.json").read_text())
        assert payload["config_hash"] == config_hash(TINY)
        assert payload["config"]["scenario"]["height"] == 16

    def test_checkpoints_reload(self, exp):
        ckpt_dir = exp / "checkpoints"
        encoder = encoder_from_checkpoint(
            load_checkpoint(ckpt_dir / "cae_burnt_area.ckpt"))
        assert encoder.d == 8
        seq = Seq2SeqModel.from_checkpoint(
            load_checkpoint(ckpt_dir / "seq2seq_joint_p12.ckpt"))
        assert (seq.p, seq.n, seq.mode) == (12, 12, "joint")
        conv = ConvLstmModel.from_checkpoint(
            load_checkpoint(ckpt_dir / "convlstm_single_p12.ckpt"))
        assert conv.n_blocks == 1

    def test_prediction_rasters_masked_unit_range(self, exp):
        mask, planes, meta = load_raster(
            exp / "predictions" / "convlstm_joint_p12_r4.pyro")
        preds = planes["burnt_area"]
        assert preds.shape[0] == 348
        assert meta["first_month"] == 13
        assert meta["eval_run"] == "r4"
        assert float(preds.min()) >= 0.0 and float(preds.max()) <= 1.0
        assert np.all(preds[:, ~mask.land] == 0.0)

    def test_timings_cover_stages(self, exp):
        header, rows = read_csv(exp / "csv" / "timings.csv")
        names = set(column(header, rows, "name"))
        assert "total_pipeline" in names
        assert "train_cae_burnt_area" in names
        assert "rollout_convlstm_joint_p12_r4" in names
        secs = [float(v) for v in column(header, rows, "seconds")]
        assert all(s >= 0.0 for s in secs)


class TestTables:
    def test_summary_exactly_four_variants_two_runs(self, exp):
        header, rows = read_csv(exp / "csv" / "summary.csv")
        assert len(rows) == 8
        models = column(header, rows, "model")
        runs = column(header, rows, "eval_run")
        assert set(models) == {"caelstm_single_p12", "caelstm_joint_p12",
                               "convlstm_single_p12", "convlstm_joint_p12"}
        assert set(runs) == {"r4", "r5"}
        pairs = set(zip(models, runs))
        assert len(pairs) == 8

    def test_window_study_rows(self, exp):
        header, rows = read_csv(exp / "csv" / "window_study.csv")
        assert [r[:2] for r in rows] == [["caelstm", "3"], ["caelstm", "12"],
                                         ["convlstm", "3"], ["convlstm", "12"]]
        assert set(column(header, rows, "months")) == {"336"}

    def test_finetune_rows(self, exp):
        header, rows = read_csv(exp / "csv" / "finetune.csv")
        assert len(rows) == 4
        assert set(column(header, rows, "variant")) == {"original", "tuned"}
        assert set(column(header, rows, "months")) == {"61-360"}

    def test_curve_row_counts_match_horizons(self, exp):
        cases = {"caelstm_joint_p12_r4.csv": 348,
                 "convlstm_single_p12_r5.csv": 300,
                 "study_convlstm_p3_r4.csv": 336,
                 "caelstm_joint_p12_tuned_r5.csv": 300}
        for name, horizon in cases.items():
            header, rows = read_csv(exp / "csv" / "rollouts" / name)
            assert len(rows) == horizon, name
            months = [int(v) for v in column(header, rows, "month")]
            assert months[-1] == 360

    def test_study_months_shared_across_windows(self, exp):
        first = {}
        for p in (3, 12):
            header, rows = read_csv(
                exp / "csv" / "rollouts" / f"study_caelstm_p{p}_r4.csv")
            first[p] = column(header, rows, "month")[0]
        assert first[3] == first[12] == "25"

    def test_report_mentions_hash_and_flags(self, exp):
        text = (exp / "report.md").read_text()
        assert config_hash(TINY) in text
        assert "best AEP" in text and "best SSIM" in text


class TestDeterminism:
    def test_metric_csvs_byte_identical(self, experiment_pair):
        first, second = experiment_pair
        for name in METRIC_CSVS:
            a = (first / "csv" / name).read_bytes()
            b = (second / "csv" / name).read_bytes()
            assert a == b, name
        rollouts = sorted(p.name for p in (first / "csv" / "rollouts").glob("*.csv"))
        assert rollouts == sorted(
            p.name for p in (second / "csv" / "rollouts").glob("*.csv"))
        for name in rollouts:
            a = (first / "csv" / "rollouts" / name).read_bytes()
            b = (second / "csv" / "rollouts" / name).read_bytes()
            assert a == b, name

    def test_checkpoints_byte_identical(self, experiment_pair):
        first, second = experiment_pair
        for path in sorted((first / "checkpoints").glob("*.ckpt")):
            twin = second / "checkpoints" / path.name
            assert path.read_bytes() == twin.read_bytes(), path.name


class TestValidation:
    def test_window_lengths_must_include_summary_window(self, tmp_path):
        import dataclasses
        bad = dataclasses.replace(
            TINY, pipeline=PipelineSection(window_lengths=(3, 6)))
        with pytest.raises(ConfigError, match="12"):
            Experiment(bad, tmp_path)._model_grid()
