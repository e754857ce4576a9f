"""CLI contract: exit codes, flag handling and stagewise resumption."""

from __future__ import annotations

import json

import pytest

from pyrocast.cli import main
from pyrocast.config import config_hash, load_config
from pyrocast.report import column, read_csv

MICRO_TOML = """\
[scenario]
height = 12
width = 16
seed = 7

[rom]
latent = 6
filters = [5, 4, 3]
dense_width = 12
ae_hidden = 16
epochs = 2
batch_size = 32
lr = 3e-3
patience = 2
snapshot_stride = 6
seed = 1

[dyn]
enc_hidden = 8
dec_hidden = 6
epochs = 3
batch_size = 32
lr = 3e-3
patience = 3
max_windows = 60
seed = 2

[convlstm]
hidden = 2
epochs = 2
batch_size = 4
lr = 5e-3
patience = 2
max_windows = 8
seed = 3

[finetune]
epochs = 1
batch_size = 8
seed = 4

[pipeline]
window_lengths = [12]
workers = 2
heatmap_months = [2, 9]
"""


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.toml"
    path.write_text(MICRO_TOML)
    return path


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["calibrate"]) == 1

    def test_missing_outdir_is_usage_error(self, capsys):
        assert main(["rollout"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for name in ("synthgen", "rom", "dyn", "convlstm", "rollout",
                     "finetune", "report", "pipeline"):
            assert name in out

    def test_subcommand_help_exits_zero(self, capsys):
        assert main(["pipeline", "--help"]) == 0
        out = capsys.readouterr().out
        assert "--paper-scale" in out and "--config" in out


class TestRuntimeErrors:
    def test_report_on_empty_directory(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_rom_before_synthgen(self, tmp_path, capsys):
        assert main(["rom", str(tmp_path)]) == 2
        assert "synthgen" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[rom]\nepochs = \"many\"\n")
        assert main(["synthgen", str(tmp_path / "exp"),
                     "--config", str(bad)]) == 2


@pytest.fixture(scope="module")
def exp(micro_config, tmp_path_factory):
    outdir = tmp_path_factory.mktemp("stagewise") / "exp"
    order = ("synthgen", "rom", "dyn", "convlstm", "rollout", "finetune")
    for stage in order:
        assert main([stage, str(outdir),
                     "--config", str(micro_config)]) == 0, stage
    assert main(["report", str(outdir)]) == 0
    return outdir


class TestStagewise:
    def test_artifacts_complete(self, exp):
        assert (exp / "report.md").is_file()
        for name in ("encoders.csv", "window_study.csv", "summary.csv",
                     "finetune.csv", "timings.csv"):
            assert (exp / "csv" / name).is_file()
        assert (exp / "checkpoints" / "seq2seq_joint_p12_tuned.ckpt").is_file()

    def test_timings_accumulate_across_stages(self, exp):
        header, rows = read_csv(exp / "csv" / "timings.csv")
        names = column(header, rows, "name")
        assert "generate_data" in names
        assert "rollout_convlstm_joint_p12_r4" in names
        assert "finetune_convlstm" in names
        assert "total_pipeline" not in names

    def test_stored_config_reused_without_flag(self, exp, micro_config):
        payload = json.loads((exp / "config.json").read_text())
        assert payload["config_hash"] == config_hash(load_config(micro_config))
        assert main(["report", str(exp)]) == 0

    def test_mismatched_config_rejected(self, exp, tmp_path, capsys):
        other = tmp_path / "other.toml"
        other.write_text("[scenario]\nseed = 99\n")
        assert main(["rollout", str(exp), "--config", str(other)]) == 2
        assert "fresh directory" in capsys.readouterr().err


class TestConfigResolution:
    def test_paper_scale_flag_sets_wide_preset(self, tmp_path):
        from pyrocast.cli import _resolve_config, build_parser
        args = build_parser().parse_args(
            ["synthgen", str(tmp_path), "--paper-scale"])
        config = _resolve_config(args)
        assert config.paper_scale
        assert (config.scenario.height, config.scenario.width) == (112, 192)
        assert config.rom.filters == (128, 64, 32)

    def test_defaults_without_flag(self, tmp_path):
        from pyrocast.cli import _resolve_config, build_parser
        args = build_parser().parse_args(["synthgen", str(tmp_path)])
        config = _resolve_config(args)
        assert not config.paper_scale
        assert (config.scenario.height, config.scenario.width) == (28, 48)
