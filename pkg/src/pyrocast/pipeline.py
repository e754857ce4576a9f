"""One-command experiment: data, encoders, surrogates, rollouts, report.

Produces a self-contained directory::

    runs/          synthetic suite + normalization ranges
    checkpoints/   every trained model
    predictions/   burnt-area rollouts of the headline models
    csv/           metric tables (timings kept in their own file)
    figures/       curve plots and field panels
    report.md

Training jobs that do not depend on each other run in a bounded worker
pool; everything downstream of them is sequential so rollout wall-clock
numbers are not polluted by concurrent training.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig, config_hash
from .convlstm import ConvLstmModel, train_convlstm
from .errors import ConfigError
from .fields import VARIABLES, GridSpec, load_run, save_raster, save_run
from .finetune import ADAPT_SNAPSHOTS, finetune_caelstm, finetune_convlstm
from .latentdyn import Seq2SeqModel, train_seq2seq
from .metrics import Stopwatch
from .preprocess import (NormalizationStats, fit_stats, make_windows,
                         network_input, normalize_run)
from .report import read_csv, write_csv, write_report
from .rollout import (CaeLstmSurrogate, ConvLstmSurrogate, RolloutPlan,
                      cumulative_metrics, run_rollout)
from .rom import (PcaModel, encoder_from_checkpoint, evaluate_encoder,
                  fit_autoencoder)
from .synthgen import (ADAPTATION_RUN, RUN_IDS, TRAIN_RUNS, VALIDATION_RUN,
                       ScenarioConfig, generate_suite)
from .training import TrainConfig

SUMMARY_WINDOW = 12


def _scenario(config: PipelineConfig) -> ScenarioConfig:
    s = config.scenario
    return ScenarioConfig(grid=GridSpec(s.height, s.width), seed=s.seed,
                          land_fraction=s.land_fraction,
                          noise_scale=s.noise_scale)


def _latent_windows(series: np.ndarray, p: int, n: int,
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Stride-1 windows over one run's (T, width) latent track."""
    starts = range(series.shape[0] - p - n + 1)
    inputs = np.stack([series[s:s + p] for s in starts])
    targets = np.stack([series[s + p:s + p + n] for s in starts])
    return inputs, targets


def _subsample(n_total: int, limit: int) -> np.ndarray:
    """Evenly spaced window indices; keeps the seasonal phases balanced."""
    if limit <= 0 or n_total <= limit:
        return np.arange(n_total)
    return np.unique(np.linspace(0, n_total - 1, limit).round().astype(int))


class _Timings:
    """Name -> seconds rows, written in insertion order."""

    def __init__(self) -> None:
        self.rows: list[tuple[str, float]] = []

    def add(self, name: str, seconds: float) -> None:
        self.rows.append((name, round(float(seconds), 3)))


class Experiment:
    """Builds every artifact of one configured run under ``outdir``."""

    def __init__(self, config: PipelineConfig, outdir: str | Path):
        self.config = config
        self.outdir = Path(outdir)
        self.csv_dir = self.outdir / "csv"
        self.timings = _Timings()
        self.encoders: dict[str, object] = {}
        self.seq2seq: dict[str, object] = {}
        self.convlstm: dict[str, object] = {}
        self.norm: dict[str, dict[str, np.ndarray]] = {}
        self.latents: dict[str, dict[str, np.ndarray]] = {}
        self.summary_rows: list[list] = []
        self.finetune_rows: list[list] = []

    # -- persistence between stage invocations --------------------------------

    def write_config(self, overwrite: bool = False) -> None:
        """Record the resolved configuration; guards stage mixing.

        Stage commands run in separate processes, so the stored hash is
        the only way to notice that someone resumed a directory with
        different settings.  Commands that (re)define the experiment pass
        ``overwrite``.
        """
        path = self.outdir / "config.json"
        payload = json.dumps(
            {"config": self.config.to_dict(),
             "config_hash": config_hash(self.config)},
            indent=2, sort_keys=True)
        if path.is_file() and not overwrite:
            stored = json.loads(path.read_text()).get("config_hash")
            if stored != config_hash(self.config):
                raise ConfigError(
                    f"{path} was produced with config {stored}, current "
                    f"settings hash to {config_hash(self.config)}; use a "
                    f"fresh directory or the matching config")
        self.outdir.mkdir(parents=True, exist_ok=True)
        path.write_text(payload)

    def save_timings(self) -> None:
        """Merge this invocation's rows into csv/timings.csv by name."""
        path = self.csv_dir / "timings.csv"
        fresh = dict(self.timings.rows)
        merged: list[list] = []
        if path.is_file():
            _, rows = read_csv(path)
            for name, seconds in rows:
                merged.append([name, fresh.pop(name, seconds)])
        merged.extend([name, seconds] for name, seconds in self.timings.rows
                      if name in fresh)
        write_csv(path, ["name", "seconds"], merged)

    def load_data(self) -> None:
        """Rehydrate the suite written by an earlier synthgen stage."""
        runs_dir = self.outdir / "runs"
        stats_path = runs_dir / "stats.json"
        if not stats_path.is_file():
            raise ConfigError(
                f"{runs_dir} holds no generated suite; run synthgen first")
        self.stats = NormalizationStats.from_dict(
            json.loads(stats_path.read_text()))
        self.runs = {}
        for run_id in RUN_IDS:
            run, self.mask = load_run(runs_dir / f"{run_id}.pyro")
            self.runs[run_id] = run
            raw = normalize_run(run, self.stats)
            self.norm[run_id] = {v: network_input(a) for v, a in raw.items()}

    def _require_checkpoint(self, name: str, stage: str) -> dict:
        path = self.outdir / "checkpoints" / name
        if not path.is_file():
            raise ConfigError(f"missing {path}; run the {stage} stage first")
        return load_checkpoint(path)

    def load_encoders(self) -> None:
        for variable in VARIABLES:
            self.encoders[variable] = encoder_from_checkpoint(
                self._require_checkpoint(f"cae_{variable}.ckpt", "rom"))

    def load_sequence_models(self, jobs=None) -> None:
        for mode, p in (self._model_grid() if jobs is None else jobs):
            key = f"{mode}_p{p}"
            self.seq2seq[key] = Seq2SeqModel.from_checkpoint(
                self._require_checkpoint(f"seq2seq_{key}.ckpt", "dyn"))
            self.convlstm[key] = ConvLstmModel.from_checkpoint(
                self._require_checkpoint(f"convlstm_{key}.ckpt", "convlstm"))

    # -- stage 1: data ------------------------------------------------------

    def generate_data(self) -> None:
        with Stopwatch() as watch:
            self.runs, self.mask = generate_suite(_scenario(self.config))
            runs_dir = self.outdir / "runs"
            runs_dir.mkdir(parents=True, exist_ok=True)
            for run_id in RUN_IDS:
                save_run(runs_dir / f"{run_id}.pyro", self.runs[run_id], self.mask)
            self.stats = fit_stats([self.runs[r] for r in TRAIN_RUNS])
            (runs_dir / "stats.json").write_text(
                json.dumps(self.stats.to_dict(), indent=2, sort_keys=True))
            for run_id in RUN_IDS:
                raw = normalize_run(self.runs[run_id], self.stats)
                self.norm[run_id] = {v: network_input(a) for v, a in raw.items()}
        self.timings.add("generate_data", watch.seconds)

    # -- stage 2: encoders ---------------------------------------------------

    def _cae_config(self, index: int) -> TrainConfig:
        rom = self.config.rom
        return TrainConfig(epochs=rom.epochs, batch_size=rom.batch_size,
                           lr=rom.lr, patience=rom.patience,
                           seed=rom.seed + index)

    def _train_fields(self, variable: str) -> np.ndarray:
        stride = max(1, self.config.rom.snapshot_stride)
        return np.concatenate(
            [self.norm[r][variable][::stride] for r in TRAIN_RUNS])

    def fit_encoders(self) -> None:
        rom = self.config.rom
        grid = self.mask.grid
        burnt = VARIABLES[0]

        def cae_job(index_variable):
            index, variable = index_variable
            fields = self._train_fields(variable)
            with Stopwatch() as watch:
                model, history = fit_autoencoder(
                    fields, rom.latent, "cae", variable, grid,
                    self._cae_config(index), filters=rom.filters,
                    dense_width=rom.dense_width, mask=self.mask)
            return variable, model, history, watch.seconds

        def baseline_job(kind):
            fields = self._train_fields(burnt)
            with Stopwatch() as watch:
                if kind == "pca":
                    model = PcaModel.fit(fields, rom.latent, burnt, grid)
                else:
                    model, _ = fit_autoencoder(
                        fields, rom.latent, "ae", burnt, grid,
                        self._cae_config(9), hidden=rom.ae_hidden,
                        mask=self.mask)
            return kind, model, watch.seconds

        workers = max(1, self.config.pipeline.workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cae_results = list(pool.map(cae_job, enumerate(VARIABLES)))
            baseline_results = list(pool.map(baseline_job, ("pca", "ae")))

        ckpt_dir = self.outdir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        for variable, model, _, seconds in cae_results:
            self.encoders[variable] = model
            self.timings.add(f"train_cae_{variable}", seconds)
            save_checkpoint(ckpt_dir / f"cae_{variable}.ckpt",
                            model.to_checkpoint())
        baselines = {}
        for kind, model, seconds in baseline_results:
            baselines[kind] = model
            self.timings.add(f"train_{kind}_{burnt}", seconds)
            save_checkpoint(ckpt_dir / f"{kind}_{burnt}.ckpt",
                            model.to_checkpoint())

        holdout = self.norm[VALIDATION_RUN][burnt]
        rows = []
        for kind in ("pca", "ae", "cae"):
            model = baselines.get(kind, self.encoders.get(burnt))
            scores = evaluate_encoder(model, holdout, self.mask)
            rows.append([scores["kind"], scores["variable"], scores["latent"],
                         scores["compression"], scores["aep"], scores["ssim"]])
            self.timings.add(f"encode_decode_{kind}", scores["seconds"])
        write_csv(self.csv_dir / "encoders.csv",
                  ["kind", "variable", "latent", "compression", "aep", "ssim"],
                  rows)

    def encode_runs(self) -> None:
        with Stopwatch() as watch:
            for run_id in RUN_IDS:
                self.latents[run_id] = {
                    v: np.asarray(self.encoders[v].encode(self.norm[run_id][v]),
                                  np.float32)
                    for v in VARIABLES}
        self.timings.add("encode_runs", watch.seconds)

    def _joint_latents(self, run_id: str) -> np.ndarray:
        return np.concatenate([self.latents[run_id][v] for v in VARIABLES],
                              axis=1)

    # -- stage 3: sequence models ---------------------------------------------

    def _dyn_config(self, offset: int) -> TrainConfig:
        dyn = self.config.dyn
        return TrainConfig(epochs=dyn.epochs, batch_size=dyn.batch_size,
                           lr=dyn.lr, patience=dyn.patience,
                           seed=dyn.seed + offset)

    def _convlstm_config(self, offset: int) -> TrainConfig:
        c = self.config.convlstm
        return TrainConfig(epochs=c.epochs, batch_size=c.batch_size, lr=c.lr,
                           patience=c.patience, seed=c.seed + offset)

    def _model_grid(self) -> list[tuple[str, int]]:
        lengths = sorted(set(self.config.pipeline.window_lengths))
        jobs = [("joint", p) for p in lengths]
        if ("joint", SUMMARY_WINDOW) not in jobs:
            raise ConfigError(
                f"window_lengths must include {SUMMARY_WINDOW} for the summary "
                f"comparison, got {lengths}")
        jobs.append(("single", SUMMARY_WINDOW))
        return jobs

    def train_seq2seq_models(self) -> None:
        dyn = self.config.dyn
        jobs = self._model_grid()

        def seq2seq_job(job):
            mode, p = job
            if mode == "joint":
                tracks = [self._joint_latents(r) for r in TRAIN_RUNS]
            else:
                tracks = [self.latents[r][VARIABLES[0]] for r in TRAIN_RUNS]
            pairs = [_latent_windows(t, p, p) for t in tracks]
            inputs = np.concatenate([a for a, _ in pairs])
            targets = np.concatenate([b for _, b in pairs])
            keep = _subsample(inputs.shape[0], dyn.max_windows)
            with Stopwatch() as watch:
                model, history = train_seq2seq(
                    inputs[keep], targets[keep], mode, self._dyn_config(p),
                    enc_hidden=dyn.enc_hidden, dec_hidden=dyn.dec_hidden)
            return job, model, history, watch.seconds

        workers = max(1, self.config.pipeline.workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(seq2seq_job, jobs))

        ckpt_dir = self.outdir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        for (mode, p), model, _, seconds in results:
            self.seq2seq[f"{mode}_p{p}"] = model
            self.timings.add(f"train_caelstm_{mode}_p{p}", seconds)
            save_checkpoint(ckpt_dir / f"seq2seq_{mode}_p{p}.ckpt",
                            model.to_checkpoint())

    def train_convlstm_models(self) -> None:
        conv = self.config.convlstm
        jobs = self._model_grid()

        def convlstm_job(job):
            mode, p = job
            variables = VARIABLES if mode == "joint" else (VARIABLES[0],)
            windows = []
            for r in TRAIN_RUNS:
                windows.extend(make_windows(self.norm[r], p, p,
                                            variables=variables, run_id=r))
            keep = _subsample(len(windows), conv.max_windows)
            inputs = np.stack([windows[i].inputs for i in keep])
            targets = np.stack([windows[i].targets for i in keep])
            with Stopwatch() as watch:
                model, history = train_convlstm(
                    inputs, targets, mode, self._convlstm_config(p),
                    hidden=conv.hidden, ksize=conv.ksize, mask=self.mask)
            return job, model, history, watch.seconds

        workers = max(1, self.config.pipeline.workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(convlstm_job, jobs))

        ckpt_dir = self.outdir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        for (mode, p), model, _, seconds in results:
            self.convlstm[f"{mode}_p{p}"] = model
            self.timings.add(f"train_convlstm_{mode}_p{p}", seconds)
            save_checkpoint(ckpt_dir / f"convlstm_{mode}_p{p}.ckpt",
                            model.to_checkpoint())

    def train_sequence_models(self) -> None:
        self.train_seq2seq_models()
        self.train_convlstm_models()

    # -- stage 4: rollouts -----------------------------------------------------

    def _surrogate(self, family: str, key: str):
        if family == "caelstm":
            seq = self.seq2seq[key]
            needed = VARIABLES if seq.mode == "joint" else (VARIABLES[0],)
            encoders = {v: self.encoders[v] for v in needed}
            return CaeLstmSurrogate(seq, encoders, self.mask)
        return ConvLstmSurrogate(self.convlstm[key], self.mask)

    def _rollout(self, name: str, surrogate, run_id: str, start: int,
                 horizon: int, save_fields: bool = False) -> dict:
        series = self.norm[run_id]
        plan = RolloutPlan(horizon=horizon, drivers=self.config.rollout.drivers,
                           start=start)
        result = run_rollout(surrogate, series, plan)
        reference = series[VARIABLES[0]][result.month_indices]
        metrics = cumulative_metrics(result.predictions, reference, self.mask)
        months = result.month_indices + 1
        write_csv(self.csv_dir / "rollouts" / f"{name}.csv",
                  ["month", "aep", "ssim", "cum_aep"],
                  [[int(m), a, s, c] for m, a, s, c in
                   zip(months, metrics["aep"], metrics["ssim"],
                       metrics["cum_aep"])])
        self.timings.add(f"rollout_{name}", result.seconds)
        if save_fields:
            pred_dir = self.outdir / "predictions"
            pred_dir.mkdir(parents=True, exist_ok=True)
            save_raster(pred_dir / f"{name}.pyro", self.mask,
                        {VARIABLES[0]: result.predictions},
                        {"first_month": int(months[0]), "eval_run": run_id,
                         "config_hash": config_hash(self.config)})
        return metrics

    def run_window_study(self) -> None:
        lengths = sorted(set(self.config.pipeline.window_lengths))
        rows = []
        for family in ("caelstm", "convlstm"):
            for p in lengths:
                start = 2 * SUMMARY_WINDOW - p
                horizon = 360 - 2 * SUMMARY_WINDOW
                surrogate = self._surrogate(family, f"joint_p{p}")
                metrics = self._rollout(f"study_{family}_p{p}_{VALIDATION_RUN}",
                                        surrogate, VALIDATION_RUN, start, horizon)
                rows.append([family, p, horizon, metrics["mean_aep"],
                             metrics["mean_ssim"], metrics["mean_cum_aep"]])
        write_csv(self.csv_dir / "window_study.csv",
                  ["surrogate", "window", "months", "mean_aep", "mean_ssim",
                   "mean_cum_aep"], rows)

    def run_summary_rollouts(self) -> None:
        self._r5_originals = {}
        for family in ("caelstm", "convlstm"):
            for mode in ("single", "joint"):
                key = f"{mode}_p{SUMMARY_WINDOW}"
                model_name = f"{family}_{key}"
                metrics = self._rollout(
                    f"{model_name}_{VALIDATION_RUN}",
                    self._surrogate(family, key), VALIDATION_RUN,
                    start=0, horizon=360 - SUMMARY_WINDOW, save_fields=True)
                self.summary_rows.append(
                    [model_name, mode, SUMMARY_WINDOW, VALIDATION_RUN,
                     metrics["mean_aep"], metrics["mean_ssim"],
                     metrics["mean_cum_aep"]])
                metrics = self._rollout(
                    f"{model_name}_{ADAPTATION_RUN}",
                    self._surrogate(family, key), ADAPTATION_RUN,
                    start=ADAPT_SNAPSHOTS - SUMMARY_WINDOW,
                    horizon=360 - ADAPT_SNAPSHOTS, save_fields=True)
                self.summary_rows.append(
                    [model_name, mode, SUMMARY_WINDOW, ADAPTATION_RUN,
                     metrics["mean_aep"], metrics["mean_ssim"],
                     metrics["mean_cum_aep"]])
                if mode == "joint":
                    self._r5_originals[family] = metrics
        write_csv(self.csv_dir / "summary.csv",
                  ["model", "mode", "window", "eval_run", "mean_aep",
                   "mean_ssim", "mean_cum_aep"], self.summary_rows)

    # -- stage 5: fine-tuning ---------------------------------------------------

    def _original_r5(self, family: str) -> dict:
        """Pre-adaptation metrics; falls back to summary.csv between stages."""
        stash = getattr(self, "_r5_originals", {})
        if family in stash:
            return stash[family]
        header, rows = read_csv(self.csv_dir / "summary.csv")
        wanted = f"{family}_joint_p{SUMMARY_WINDOW}"
        for row in rows:
            named = dict(zip(header, row))
            if named["model"] == wanted and named["eval_run"] == ADAPTATION_RUN:
                return {"mean_aep": float(named["mean_aep"]),
                        "mean_ssim": float(named["mean_ssim"])}
        raise ConfigError(
            f"summary.csv has no {wanted} row on {ADAPTATION_RUN}; run the "
            f"rollout stage first")

    def run_finetune(self) -> None:
        ft = self.config.finetune
        adapt = {v: self.norm[ADAPTATION_RUN][v][:ADAPT_SNAPSHOTS]
                 for v in VARIABLES}
        key = f"joint_p{SUMMARY_WINDOW}"
        span = f"{ADAPT_SNAPSHOTS + 1}-360"
        ckpt_dir = self.outdir / "checkpoints"

        with Stopwatch() as watch:
            tuned_seq, _ = finetune_caelstm(
                self.seq2seq[key], self.encoders, adapt, epochs=ft.epochs,
                batch_size=ft.batch_size, seed=ft.seed)
        self.timings.add("finetune_caelstm", watch.seconds)
        save_checkpoint(ckpt_dir / f"seq2seq_{key}_tuned.ckpt",
                        tuned_seq.to_checkpoint())

        with Stopwatch() as watch:
            tuned_conv, _ = finetune_convlstm(
                self.convlstm[key], adapt, epochs=ft.epochs,
                batch_size=ft.batch_size, seed=ft.seed, mask=self.mask)
        self.timings.add("finetune_convlstm", watch.seconds)
        save_checkpoint(ckpt_dir / f"convlstm_{key}_tuned.ckpt",
                        tuned_conv.to_checkpoint())

        tuned = {
            "caelstm": CaeLstmSurrogate(tuned_seq, dict(self.encoders), self.mask),
            "convlstm": ConvLstmSurrogate(tuned_conv, self.mask),
        }
        for family, surrogate in tuned.items():
            model_name = f"{family}_{key}"
            original = self._original_r5(family)
            metrics = self._rollout(
                f"{model_name}_tuned_{ADAPTATION_RUN}", surrogate,
                ADAPTATION_RUN, start=ADAPT_SNAPSHOTS - SUMMARY_WINDOW,
                horizon=360 - ADAPT_SNAPSHOTS, save_fields=True)
            self.finetune_rows.append(
                [model_name, "original", ADAPTATION_RUN, span,
                 original["mean_aep"], original["mean_ssim"]])
            self.finetune_rows.append(
                [model_name, "tuned", ADAPTATION_RUN, span,
                 metrics["mean_aep"], metrics["mean_ssim"]])
        write_csv(self.csv_dir / "finetune.csv",
                  ["model", "variant", "eval_run", "months", "mean_aep",
                   "mean_ssim"], self.finetune_rows)

    # -- stage 6: artifacts ------------------------------------------------------

    def finalize(self, total_seconds: float) -> None:
        self.timings.add("total_pipeline", total_seconds)
        self.save_timings()
        write_report(self.outdir)


def run_pipeline(config: PipelineConfig, outdir: str | Path) -> Path:
    """Execute every stage; returns the experiment directory."""
    experiment = Experiment(config, outdir)
    experiment.write_config(overwrite=True)
    (experiment.csv_dir / "timings.csv").unlink(missing_ok=True)
    with Stopwatch() as watch:
        experiment.generate_data()
        experiment.fit_encoders()
        experiment.encode_runs()
        experiment.train_sequence_models()
        experiment.run_window_study()
        experiment.run_summary_rollouts()
        experiment.run_finetune()
    experiment.finalize(watch.seconds)
    return experiment.outdir
