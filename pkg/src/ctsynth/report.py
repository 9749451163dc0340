"""Static report rendering: matplotlib figures plus CSV next to them.

Batch-oriented by design: every renderer takes parsed inputs and an output
directory and writes PNG + CSV files, no interactive UI. Trajectory plots
mark the selected checkpoint; study plots show per-arm regret distributions.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport
from .selection import MetricTrajectory, select_best


def render_trajectories(
    trajectories: list[MetricTrajectory],
    metric: str,
    out_dir: str | Path,
    direction: str = "maximize",
) -> list[Path]:
    """One curve per run, best checkpoint dotted; plus a CSV of all records."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / f"trajectory_{metric}.png"
    csv_path = out_dir / f"trajectory_{metric}.csv"

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for traj in trajectories:
        epochs, values = traj.series(metric)
        (line,) = ax.plot(epochs, values, lw=1.2, label=f"run {traj.run}")
        sel = select_best(traj, metric, direction)
        ax.plot(
            [sel.best_epoch], [sel.best_value], "o", color=line.get_color(), ms=6
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel(metric)
    ax.set_title(f"checkpoint trajectory ({metric}); dot = selected")
    if len(trajectories) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png, dpi=150)
    plt.close(fig)

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "epoch", "metric", "value"])
        for traj in trajectories:
            epochs, values = traj.series(metric)
            for e, v in zip(epochs, values):
                writer.writerow([traj.run, int(e), metric, repr(float(v))])
    return [png, csv_path]


def render_study(study_dict: dict, out_dir: str | Path) -> list[Path]:
    """Regret distributions per validation-size arm: box plot + summary CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / "study_regret.png"
    csv_path = out_dir / "study_regret.csv"
    arms = study_dict["arms"]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    data = [a["regrets"] for a in arms]
    labels = [f"n_val={a['n_val']}" for a in arms]
    ax.boxplot(data, tick_labels=labels, showmeans=True)
    ax.set_ylabel("test regret")
    ax.set_title("checkpoint-selection regret vs validation size")
    fig.tight_layout()
    fig.savefig(png, dpi=150)
    plt.close(fig)

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_val", "trials", "median_regret", "mean_regret", "zero_regret_fraction"]
        )
        for a in arms:
            writer.writerow(
                [
                    a["n_val"],
                    len(a["regrets"]),
                    repr(a["median_regret"]),
                    repr(a["mean_regret"]),
                    repr(a["zero_regret_fraction"]),
                ]
            )
    return [png, csv_path]


def render_eval(report: dict | EvalReport, out_dir: str | Path) -> list[Path]:
    """Per-bin sensitivity bar chart plus per-case and per-bin CSV tables."""
    if isinstance(report, EvalReport):
        report = report.to_dict()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / "eval_sensitivity.png"
    cases_csv = out_dir / "eval_cases.csv"
    bins_csv = out_dir / "eval_bins.csv"

    bins = report["bins"]
    names = [b["name"] for b in bins]
    sens = [0.0 if b["sensitivity"] is None else b["sensitivity"] for b in bins]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(np.arange(len(names)), sens, color="#c44e52")
    ax.set_xticks(np.arange(len(names)), names)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("per-lesion sensitivity")
    ax.set_title(
        f"mean DSC {report['mean_dsc']:.3f} "
        f"({report['ci_lo']:.3f}-{report['ci_hi']:.3f}); "
        f"overlap_frac={report['overlap_frac']}"
    )
    fig.tight_layout()
    fig.savefig(png, dpi=150)
    plt.close(fig)

    with open(cases_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "dsc"])
        for c in report["cases"]:
            writer.writerow([c["id"], repr(float(c["dsc"]))])
    with open(bins_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "lo_mm", "hi_mm", "total", "detected", "sensitivity"])
        for b in bins:
            writer.writerow(
                [
                    b["name"],
                    b["lo_mm"],
                    b["hi_mm"],
                    b["total"],
                    b["detected"],
                    "" if b["sensitivity"] is None else repr(b["sensitivity"]),
                ]
            )
    return [png, cases_csv, bins_csv]


def render_mask_montage(
    masks: list[np.ndarray], out_path: str | Path, cols: int = 5, titles=None
) -> Path:
    """Central axial slice of each mask, tiled into one gallery figure."""
    out_path = Path(out_path)
    n = len(masks)
    cols = max(1, min(cols, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.2 * rows))
    axes = np.atleast_1d(axes).ravel()
    for i, ax in enumerate(axes):
        ax.axis("off")
        if i < n:
            m = masks[i]
            ax.imshow(m[:, :, m.shape[2] // 2].T, origin="lower", cmap="gray")
            if titles is not None:
                ax.set_title(titles[i], fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
