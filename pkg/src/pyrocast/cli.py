"""Command-line entry point.

Stages of one experiment map to subcommands so a run can be resumed or
re-rendered piecemeal; ``pipeline`` chains all of them.  Every stage reads
and writes a single experiment directory.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import (PipelineConfig, config_from_dict, config_hash,
                     full_scale_defaults, load_config)
from .errors import PyrocastError
from .pipeline import SUMMARY_WINDOW, Experiment, run_pipeline
from .report import write_report


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Explicit TOML wins, then the directory's stored config, then presets."""
    if args.config is not None:
        return load_config(args.config, paper_scale=args.paper_scale)
    stored = Path(args.outdir) / "config.json"
    if stored.is_file():
        return config_from_dict(json.loads(stored.read_text())["config"])
    return full_scale_defaults() if args.paper_scale else PipelineConfig()


def _stage(args: argparse.Namespace, overwrite: bool = False) -> Experiment:
    experiment = Experiment(_resolve_config(args), args.outdir)
    experiment.write_config(overwrite=overwrite)
    return experiment


def cmd_synthgen(args: argparse.Namespace) -> int:
    experiment = _stage(args, overwrite=True)
    experiment.generate_data()
    experiment.save_timings()
    print(f"suite written -> {experiment.outdir / 'runs'}")
    return 0


def cmd_rom(args: argparse.Namespace) -> int:
    experiment = _stage(args)
    experiment.load_data()
    experiment.fit_encoders()
    experiment.save_timings()
    print(f"encoders written -> {experiment.outdir / 'checkpoints'}")
    return 0


def cmd_dyn(args: argparse.Namespace) -> int:
    experiment = _stage(args)
    experiment.load_data()
    experiment.load_encoders()
    experiment.encode_runs()
    experiment.train_seq2seq_models()
    experiment.save_timings()
    print(f"latent forecasters written -> {experiment.outdir / 'checkpoints'}")
    return 0


def cmd_convlstm(args: argparse.Namespace) -> int:
    experiment = _stage(args)
    experiment.load_data()
    experiment.train_convlstm_models()
    experiment.save_timings()
    print(f"field forecasters written -> {experiment.outdir / 'checkpoints'}")
    return 0


def cmd_rollout(args: argparse.Namespace) -> int:
    experiment = _stage(args)
    experiment.load_data()
    experiment.load_encoders()
    experiment.load_sequence_models()
    experiment.run_window_study()
    experiment.run_summary_rollouts()
    experiment.save_timings()
    print(f"rollout tables written -> {experiment.csv_dir}")
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    experiment = _stage(args)
    experiment.load_data()
    experiment.load_encoders()
    experiment.load_sequence_models(jobs=[("joint", SUMMARY_WINDOW)])
    experiment.run_finetune()
    experiment.save_timings()
    print(f"adaptation tables written -> {experiment.csv_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    write_report(args.outdir)
    print(f"report written -> {Path(args.outdir) / 'report.md'}")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    outdir = run_pipeline(config, args.outdir)
    print(f"experiment complete ({config_hash(config)}) -> {outdir}")
    return 0


_STAGES = [
    ("synthgen", cmd_synthgen, "generate the five synthetic runs"),
    ("rom", cmd_rom, "fit the field compressors and their baselines"),
    ("dyn", cmd_dyn, "train latent-sequence forecasters on encoded runs"),
    ("convlstm", cmd_convlstm, "train field-space sequence forecasters"),
    ("rollout", cmd_rollout, "run window study and summary rollouts"),
    ("finetune", cmd_finetune, "adapt the joint models to the held-out run"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pyrocast",
                     description="Wildfire surrogate experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                required=True)

    def add_stage(name, func, help_text):
        cmd = sub.add_parser(name, help=help_text, description=help_text)
        cmd.add_argument("outdir", help="experiment directory")
        cmd.add_argument("--config", metavar="PATH",
                         help="TOML overrides; without it a stored "
                              "config.json is reused when present")
        cmd.add_argument("--paper-scale", action="store_true",
                         help="112x192 grid with the wide model preset")
        cmd.set_defaults(func=func)

    for name, func, help_text in _STAGES:
        add_stage(name, func, help_text)
    report = sub.add_parser("report", help="re-render report.md and figures",
                            description="re-render report.md and figures")
    report.add_argument("outdir", help="experiment directory")
    report.set_defaults(func=cmd_report)
    add_stage("pipeline", cmd_pipeline, "run every stage and render the report")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (PyrocastError, OSError) as exc:
        print(f"pyrocast: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
