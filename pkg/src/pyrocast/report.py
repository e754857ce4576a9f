"""Delimited metric tables, the markdown report and its figures.

Every number shown in the report is copied verbatim from a CSV cell; the
renderer compares cells to flag the best models but never recomputes a
metric.  Wall-clock measurements live in their own file (timings.csv) so
the metric tables stay byte-identical across reruns of the same seed.

Expected experiment layout::

    exp/
      config.json               resolved settings + hash
      runs/*.pyro               synthetic suite
      runs/stats.json           normalization ranges
      checkpoints/*.ckpt
      predictions/*.pyro        burnt-area rollouts (normalized units)
      csv/*.csv, csv/rollouts/*.csv
      figures/*.png
      report.md
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend pinned first

from .errors import ConfigError, FormatError
from .fields import load_raster

TIMINGS_FILE = "timings.csv"


def format_cell(value) -> str:
    """Canonical cell text: floats at 9 significant digits."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"experiment is missing {path.name}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path} is empty") from None
        rows = [row for row in reader]
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise FormatError(f"{path} has a ragged row: {row}")
    return header, rows


def column(header: list[str], rows: list[list[str]], name: str) -> list[str]:
    try:
        idx = header.index(name)
    except ValueError:
        raise FormatError(f"missing column {name!r} in {header}") from None
    return [row[idx] for row in rows]


# ---------------------------------------------------------------------------
# figures


def plot_curves(series: dict[str, tuple[np.ndarray, np.ndarray]],
                xlabel: str, ylabel: str, title: str, path: str | Path) -> None:
    """One labeled line per entry; x and y must share length."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0), dpi=110)
    for label in sorted(series):
        x, y = series[label]
        ax.plot(x, y, label=label, linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_field_rows(reference: np.ndarray, prediction: np.ndarray,
                    labels: list[str], title: str, path: str | Path) -> None:
    """Rows of (reference, prediction, absolute error) panels.

    reference/prediction: (k, H, W) stacks already in display units.
    """
    k = reference.shape[0]
    fig, axes = plt.subplots(k, 3, figsize=(9.0, 2.6 * k), dpi=110, squeeze=False)
    for i in range(k):
        error = np.abs(prediction[i] - reference[i])
        panels = (reference[i], prediction[i], error)
        names = ("reference", "prediction", "abs error")
        for j, (panel, name) in enumerate(zip(panels, names)):
            ax = axes[i][j]
            vmax = 1.0 if j < 2 else max(float(error.max()), 1e-6)
            im = ax.imshow(panel, vmin=0.0, vmax=vmax,
                           cmap="magma" if j < 2 else "viridis")
            ax.set_xticks(())
            ax.set_yticks(())
            if j == 0:
                ax.set_ylabel(labels[i], fontsize=8)
            if i == 0:
                ax.set_title(name, fontsize=9)
            fig.colorbar(im, ax=ax, fraction=0.04)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# markdown


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return lines


def _timings_map(csv_dir: Path) -> dict[str, str]:
    path = csv_dir / TIMINGS_FILE
    if not path.exists():
        return {}
    header, rows = read_csv(path)
    names = column(header, rows, "name")
    secs = column(header, rows, "seconds")
    return dict(zip(names, secs))


def _best_flags(header: list[str], rows: list[list[str]]) -> list[str]:
    """Per eval run: min mean_aep and max mean_ssim, compared on cell text."""
    runs = column(header, rows, "eval_run")
    aeps = [float(v) for v in column(header, rows, "mean_aep")]
    ssims = [float(v) for v in column(header, rows, "mean_ssim")]
    flags = ["" for _ in rows]
    for run in sorted(set(runs)):
        idx = [i for i, r in enumerate(runs) if r == run]
        best_aep = min(idx, key=lambda i: aeps[i])
        best_ssim = max(idx, key=lambda i: ssims[i])
        for i, note in ((best_aep, "best AEP"), (best_ssim, "best SSIM")):
            flags[i] = f"{flags[i]}, {note}" if flags[i] else note
    return flags


def render_report(exp_dir: str | Path) -> str:
    """Markdown summary assembled purely from the experiment's CSV files."""
    exp_dir = Path(exp_dir)
    csv_dir = exp_dir / "csv"
    if not csv_dir.is_dir():
        raise ConfigError(f"{exp_dir} has no csv directory; run the pipeline first")
    config_path = exp_dir / "config.json"
    if not config_path.exists():
        raise ConfigError(f"{exp_dir} has no config.json; run the pipeline first")
    config = json.loads(config_path.read_text())
    timings = _timings_map(csv_dir)

    lines = ["# Surrogate experiment report", ""]
    lines.append(f"Configuration hash: `{config.get('config_hash', 'unknown')}`")
    grid = config.get("config", {}).get("scenario", {})
    if grid:
        lines.append(f"Grid: {grid.get('height')}x{grid.get('width')}, "
                     f"seed {grid.get('seed')}")
    lines.append("SSIM uses a dynamic range of 1 on normalized fields "
                 "(single global window, ocean zeroed).")
    lines.append("")

    header, rows = read_csv(csv_dir / "encoders.csv")
    lines += ["## Encoder comparison (burnt area, held-out run)", ""]
    names = column(header, rows, "kind")
    merged = [row + [timings.get(f"encode_decode_{name}", "n/a")]
              for row, name in zip(rows, names)]
    lines += _table(header + ["seconds"], merged)
    lines.append("")

    header, rows = read_csv(csv_dir / "window_study.csv")
    lines += ["## Window-length study (joint models, shared evaluation months)", ""]
    lines += _table(header, rows)
    lines.append("")

    header, rows = read_csv(csv_dir / "summary.csv")
    lines += ["## Model comparison (12 -> 12)", ""]
    model_col = column(header, rows, "model")
    run_col = column(header, rows, "eval_run")
    flags = _best_flags(header, rows)
    merged = [row + [timings.get(f"rollout_{m}_{r}", "n/a"), flag]
              for row, m, r, flag in zip(rows, model_col, run_col, flags)]
    lines += _table(header + ["rollout_seconds", "flags"], merged)
    lines.append("")

    header, rows = read_csv(csv_dir / "finetune.csv")
    lines += ["## Fine-tuning on the out-of-distribution run", ""]
    lines += _table(header, rows)
    lines.append("")

    figures = sorted(p.name for p in (exp_dir / "figures").glob("*.png")) \
        if (exp_dir / "figures").is_dir() else []
    if figures:
        lines += ["## Figures", ""]
        lines += [f"![{name}](figures/{name})" for name in figures]
        lines.append("")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# figure generation from stored artifacts


def _rollout_csvs(csv_dir: Path) -> dict[str, Path]:
    rollout_dir = csv_dir / "rollouts"
    if not rollout_dir.is_dir():
        return {}
    return {p.stem: p for p in sorted(rollout_dir.glob("*.csv"))}


def write_figures(exp_dir: str | Path) -> list[Path]:
    """Render curve plots and field panels from the stored CSVs and rasters."""
    exp_dir = Path(exp_dir)
    fig_dir = exp_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    by_run: dict[str, dict[str, tuple]] = {}
    for name, path in _rollout_csvs(exp_dir / "csv").items():
        header, rows = read_csv(path)
        months = np.array([int(v) for v in column(header, rows, "month")])
        run = name.rsplit("_", 1)[-1]
        label = name[: -(len(run) + 1)]
        entry = by_run.setdefault(run, {"cum_aep": {}, "ssim": {}})
        for metric in ("cum_aep", "ssim"):
            values = np.array([float(v) for v in column(header, rows, metric)])
            entry[metric][label] = (months, values)
    for run in sorted(by_run):
        for metric, ylabel in (("cum_aep", "cumulative AEP"), ("ssim", "SSIM")):
            path = fig_dir / f"{metric}_{run}.png"
            plot_curves(by_run[run][metric], "month", ylabel,
                        f"{ylabel} on {run}", path)
            written.append(path)

    config_path = exp_dir / "config.json"
    months_wanted = (10, 65, 230)
    if config_path.exists():
        config = json.loads(config_path.read_text())
        months_wanted = tuple(config.get("config", {}).get("pipeline", {})
                              .get("heatmap_months", months_wanted))
    pred_dir = exp_dir / "predictions"
    if pred_dir.is_dir():
        for pred_path in sorted(pred_dir.glob("*.pyro")):
            written.append(_field_figure(exp_dir, pred_path, months_wanted, fig_dir))
    return written


def _field_figure(exp_dir: Path, pred_path: Path,
                  months_wanted: tuple[int, ...], fig_dir: Path) -> Path:
    mask, planes, meta = load_raster(pred_path)
    preds = planes["burnt_area"]
    first_month = int(meta.get("first_month", 1))
    eval_run = meta.get("eval_run")
    run_path = exp_dir / "runs" / f"{eval_run}.pyro"
    _, run_planes, _ = load_raster(run_path)
    stats = json.loads((exp_dir / "runs" / "stats.json").read_text())
    lo, hi = stats["burnt_area"]
    reference = (run_planes["burnt_area"] - lo) / (hi - lo)

    positions = [m for m in months_wanted if m <= preds.shape[0]]
    ref_stack = np.stack([
        np.where(mask.land, reference[first_month - 1 + pos - 1], 0.0)
        for pos in positions])
    pred_stack = np.stack([preds[pos - 1] for pos in positions])
    labels = [f"month {first_month + pos - 1}" for pos in positions]
    out = fig_dir / f"fields_{pred_path.stem}.png"
    plot_field_rows(ref_stack, pred_stack, labels,
                    f"burnt area: {pred_path.stem}", out)
    return out


def write_report(exp_dir: str | Path) -> Path:
    """Figures first, then the markdown that links to them."""
    exp_dir = Path(exp_dir)
    write_figures(exp_dir)
    text = render_report(exp_dir)
    out = exp_dir / "report.md"
    out.write_text(text)
    return out
