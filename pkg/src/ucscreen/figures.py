"""Render comparison-report figures next to the CSV/JSON output.

Three PNGs summarize a run: constraint-removal share, accuracy (cost
error and relative infeasibility) and relative computational time.
Rendering is headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import ComparisonReport

FIGURE_NAMES = (
    "removal_share.png",
    "accuracy.png",
    "relative_time.png",
)


def _bar(ax, labels, values, ylabel, title):
    ax.bar(range(len(labels)), values, color="#3b6ea5")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)


def render_report_figures(report: ComparisonReport, outdir) -> list[Path]:
    """Write the three summary figures; returns the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    labels = [r.method for r in report.reports]
    written = []

    fig, ax = plt.subplots(figsize=(6.4, 4.0), constrained_layout=True)
    _bar(ax, labels, [r.removal_pct for r in report.reports],
         "removed line constraints (%)", "Constraint removal share")
    path = outdir / FIGURE_NAMES[0]
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.0), constrained_layout=True)
    x = range(len(labels))
    width = 0.38
    ax.bar([i - width / 2 for i in x],
           [r.cost_error_pct for r in report.reports],
           width, label="cost error (%)", color="#3b6ea5")
    ax.bar([i + width / 2 for i in x],
           [r.infeasibility_pct for r in report.reports],
           width, label="infeasibility (%)", color="#c05746")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_title("Accuracy against the benchmark")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    path = outdir / FIGURE_NAMES[1]
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.0), constrained_layout=True)
    _bar(ax, labels, [r.rel_time_pct for r in report.reports],
         "screening + solve time vs benchmark (%)", "Relative computational time")
    ax.axhline(100.0, color="black", linewidth=0.8, linestyle="--")
    path = outdir / FIGURE_NAMES[2]
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written
