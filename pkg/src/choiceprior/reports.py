"""Figure and table rendering for experiment reports.

Report-producing CLI commands write three artifacts side by side: the report
JSON, a delimited table, and PNG figures rendered here with the Agg backend.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import ExperimentReport

PRIOR_COLORS = {"pretrained": "tab:red", "random": "tab:blue"}


def write_table_csv(rows: Sequence[dict], path: str | Path) -> None:
    rows = list(rows)
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def learning_curve_figure(report: ExperimentReport, path: str | Path) -> None:
    fractions = np.array(report.curves["fractions"], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for prior, curve in report.curves["priors"].items():
        mean = np.array(curve["mean"])
        se = np.array(curve["stderr"])
        color = PRIOR_COLORS.get(prior)
        ax.plot(fractions, mean, marker="o", label=prior, color=color)
        ax.fill_between(fractions, mean - se, mean + se, alpha=0.25, color=color)
    ax.set_xscale("log")
    ax.set_xlabel("fraction of training problems")
    ax.set_ylabel("validation MSE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def learning_curve_table(report: ExperimentReport) -> list[dict]:
    rows = []
    for prior, curve in report.curves["priors"].items():
        for frac, m, se in zip(report.curves["fractions"], curve["mean"], curve["stderr"]):
            rows.append({"prior": prior, "fraction": frac, "mean_mse": m, "stderr": se})
    return rows


def convergence_figure(report: ExperimentReport, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for prior, runs in report.traces.items():
        color = PRIOR_COLORS.get(prior)
        for i, trace in enumerate(runs):
            ax.plot(range(1, len(trace) + 1), trace, color=color, alpha=0.6,
                    label=prior if i == 0 else None)
    ax.set_xscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation MSE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bootstrap_figure(summaries: dict[str, dict], path: str | Path) -> None:
    """Histogram panel per bootstrap summary (keyed by label)."""
    fig, axes = plt.subplots(1, len(summaries), figsize=(5 * len(summaries), 4), squeeze=False)
    for ax, (label, summary) in zip(axes[0], summaries.items()):
        edges = np.array(summary["histogram"]["edges"])
        counts = summary["histogram"]["counts"]
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="black")
        ax.set_title(f"{label}\nmean={summary['mean']:.4g}, std={summary['std']:.4g}")
        ax.set_xlabel("MSE")
        ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mse_table_figure(rows: Sequence[dict], path: str | Path) -> None:
    """Bar chart of an MSE table (model x split)."""
    rows = list(rows)
    labels = [f"{r['model']}\n{r['split']}" for r in rows]
    values = [r["mse"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(rows) * 1.2), 4))
    ax.bar(range(len(rows)), values, color="tab:gray", edgecolor="black")
    ax.set_xticks(range(len(rows)), labels, fontsize=8)
    ax.set_ylabel("MSE")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
