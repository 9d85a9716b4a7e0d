"""
Result files of an experiment run.

Layout under the output directory::

    <label>/summary.csv          one row per grid point
    <label>/runs/run_<i>.csv     outer-iteration trace of grid point i
    gap_vs_iteration.svg         optimality gap of each experiment's selected run
    violation_vs_iteration.svg   max constraint violation, same runs
    gap_vs_gradients.svg         as above against cumulative gradient evaluations
    violation_vs_gradients.svg

Floats are written with 17 significant digits and the SVGs carry no timestamp and a
fixed hash salt, so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import logging
import typing as t
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from cmdp_alm.exceptions import OutputWriteError
from cmdp_alm.experiment.runner import ExperimentResult, RunRecord
from cmdp_alm.utils import format_float

logger = logging.getLogger(__name__)

SVG_HASH_SALT = "cmdp-alm"
Series = t.Mapping[str, t.Tuple[t.Sequence[float], t.Sequence[float]]]


def _cell(value: t.Any) -> t.Any:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    return value


def write_csv(rows: t.Sequence[t.Mapping[str, t.Any]], path: Path):
    if not rows:
        raise ValueError(f"no rows to write to {path}")
    try:
        with open(path, "w", newline="") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _cell(v) for k, v in row.items()})
    except OSError as e:
        raise OutputWriteError(str(path), str(e)) from e


def plot_series(series: Series, xlabel: str, ylabel: str, path: Path, title: str = ""):
    """Line plot with one polyline per entry of `series`, written as SVG."""
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot()
        for label, (x, y) in series.items():
            ax.plot(list(x), list(y), marker="o", markersize=3, label=label)
        ax.axhline(0.0, color="grey", linewidth=0.8, linestyle="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            raise OutputWriteError(str(path), str(e)) from e


def _series_label(result: ExperimentResult, record: RunRecord) -> str:
    return f"{result.config.label} [{record.point.label}]"


def emit_outputs(
    results: t.Union[ExperimentResult, t.Sequence[ExperimentResult]],
    out_dir: t.Union[str, Path],
) -> t.List[Path]:
    """Writes every CSV and SVG of `results` and returns the paths written."""
    if isinstance(results, ExperimentResult):
        results = [results]
    if not results:
        raise ValueError("no experiment results to write")
    out_dir = Path(out_dir)
    written: t.List[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputWriteError(str(out_dir), str(e)) from e

    by_iter_gap: t.Dict[str, t.Tuple[t.List[float], t.List[float]]] = {}
    by_iter_violation: t.Dict[str, t.Tuple[t.List[float], t.List[float]]] = {}
    by_grads_gap: t.Dict[str, t.Tuple[t.List[float], t.List[float]]] = {}
    by_grads_violation: t.Dict[str, t.Tuple[t.List[float], t.List[float]]] = {}
    for result in results:
        if not result.records:
            raise ValueError(f"experiment {result.config.label} has no runs")
        run_dir = out_dir / result.config.label / "runs"
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputWriteError(str(run_dir), str(e)) from e
        for record in result.records:
            path = run_dir / f"run_{record.index:03d}.csv"
            record.trace.to_csv(path)
            written.append(path)
        summary_path = out_dir / result.config.label / "summary.csv"
        write_csv(result.summary(), summary_path)
        written.append(summary_path)

        record = result.representative()
        label = _series_label(result, record)
        iters = [float(m.iter) for m in record.metrics]
        grads = [float(m.cum_grads) for m in record.metrics]
        gaps = [m.gap for m in record.metrics]
        violations = [m.max_violation for m in record.metrics]
        by_iter_gap[label] = (iters, gaps)
        by_iter_violation[label] = (iters, violations)
        by_grads_gap[label] = (grads, gaps)
        by_grads_violation[label] = (grads, violations)

    plots = [
        ("gap_vs_iteration.svg", by_iter_gap, "outer iteration", "optimality gap V* - V_r"),
        ("violation_vs_iteration.svg", by_iter_violation, "outer iteration", "max_i b_i - V_ci"),
        ("gap_vs_gradients.svg", by_grads_gap, "gradient evaluations", "optimality gap V* - V_r"),
        (
            "violation_vs_gradients.svg",
            by_grads_violation,
            "gradient evaluations",
            "max_i b_i - V_ci",
        ),
    ]
    for name, series, xlabel, ylabel in plots:
        path = out_dir / name
        plot_series(series, xlabel, ylabel, path)
        written.append(path)
    logger.info("wrote %d files to %s", len(written), out_dir)
    return written
