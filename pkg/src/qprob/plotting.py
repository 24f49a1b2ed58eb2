"""Figure and table renderers for experiment reports.

Everything here is file-based: each helper writes PNG figures (and a CSV
table where it makes sense) next to the delimited report output and returns
the paths it created. The Agg backend is forced so rendering works without
a display.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .conditioning import MartingaleRun
from .expectation import DominatedConvergenceReport

DPI = 150


def _grid_shape(n: int) -> tuple[int, int]:
    cols = max(1, int(math.ceil(math.sqrt(n))))
    rows = int(math.ceil(n / cols))
    return rows, cols


def plot_probe_traces(run: MartingaleRun, path: str | Path) -> Path:
    """One panel per probe state, one line per sample point.

    Each line follows the probe's trace slice of the conditioned variable
    across the stages of the filtration. The trace of a product of two
    Hermitian matrices is real, so only the real part is drawn.
    """
    path = Path(path)
    labels = sorted(run.probe_traces)
    rows, cols = _grid_shape(len(labels))
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows),
                             sharex=True, squeeze=False)
    stages = np.arange(len(run.stages))
    for idx, label in enumerate(labels):
        ax = axes[idx // cols][idx % cols]
        for x in sorted(run.probe_traces[label]):
            series = run.probe_traces[label][x]
            ax.plot(stages, np.real(series), marker="o", markersize=3,
                    linewidth=1.0, label=x)
        ax.set_title(label, fontsize=9)
        ax.grid(True, alpha=0.3)
    for idx in range(len(labels), rows * cols):
        axes[idx // cols][idx % cols].set_axis_off()
    handles, leg_labels = axes[0][0].get_legend_handles_labels()
    fig.legend(handles, leg_labels, loc="lower center",
               ncol=min(len(leg_labels), 8), fontsize=8)
    fig.suptitle("Probe traces across conditioning stages")
    fig.supxlabel("stage")
    fig.tight_layout(rect=(0, 0.06, 1, 0.97))
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_stage_gaps(run: MartingaleRun, path: str | Path) -> Path:
    """Log-scale distance of each stage to the limit, with solver residuals."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    stages = np.arange(len(run.stage_gaps))
    floor = 1e-17
    ax.semilogy(stages, np.maximum(run.stage_gaps, floor), marker="o",
                label="max entry gap to limit")
    ax.semilogy(stages, np.maximum(run.solver_residuals, floor), marker="s",
                linestyle="--", label="solver residual")
    ax.axhline(run.tol, color="gray", linewidth=0.8, label="tolerance")
    ax.set_xlabel("stage")
    ax.set_ylabel("magnitude")
    ax.set_title("Stage convergence")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def write_probe_trace_csv(run: MartingaleRun, path: str | Path) -> Path:
    """Tabulate every probe trace as stage, probe, point, real, imag rows."""
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["stage", "probe", "point", "real", "imag"])
        for label in sorted(run.probe_traces):
            for x in sorted(run.probe_traces[label]):
                series = run.probe_traces[label][x]
                for n, value in enumerate(series):
                    writer.writerow([n, label, x,
                                     repr(float(np.real(value))),
                                     repr(float(np.imag(value)))])
    return path


def plot_residual_history(report: DominatedConvergenceReport,
                          indices: Sequence[int], path: str | Path) -> Path:
    """Per-probe expectation residuals against the term index, log-log."""
    path = Path(path)
    history = np.asarray(report.residual_history)
    idx = np.asarray(list(indices), dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    floor = 1e-17
    for p in range(history.shape[0]):
        ax.loglog(idx, np.maximum(history[p], floor), linewidth=0.8,
                  alpha=0.6, color="tab:blue")
    worst = np.maximum(history.max(axis=0), floor)
    ax.loglog(idx, worst, linewidth=2.0, color="tab:red",
              label="worst probe")
    ax.loglog(idx, worst[0] * (idx[0] / idx), linestyle="--",
              color="gray", label="reference 1/n")
    ax.set_xlabel("term index")
    ax.set_ylabel("expectation residual")
    ax.set_title(f"Dominated convergence (decay exponent "
                 f"{report.decay_exponent:.2f})")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def write_residual_csv(report: DominatedConvergenceReport,
                       indices: Sequence[int], path: str | Path) -> Path:
    path = Path(path)
    history = np.asarray(report.residual_history)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["term", "probe", "residual"])
        for p in range(history.shape[0]):
            for k, n in enumerate(indices):
                writer.writerow([n, p, repr(float(history[p, k]))])
    return path


def martingale_figures(run: MartingaleRun, outdir: str | Path,
                       stem: str = "martingale") -> list[Path]:
    """Render every figure for one martingale run into a directory."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        plot_probe_traces(run, outdir / f"{stem}_probe_traces.png"),
        plot_stage_gaps(run, outdir / f"{stem}_stage_gaps.png"),
        write_probe_trace_csv(run, outdir / f"{stem}_probe_traces.csv"),
    ]


def dct_figures(report: DominatedConvergenceReport, indices: Sequence[int],
                outdir: str | Path, stem: str = "dct") -> list[Path]:
    """Render every figure for one dominated-convergence check."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        plot_residual_history(report, indices, outdir / f"{stem}_residuals.png"),
        write_residual_csv(report, indices, outdir / f"{stem}_residuals.csv"),
    ]
