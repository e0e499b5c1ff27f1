"""Figures rendered from the emitted CSV/JSON files.

Everything here reads back what ``experiments`` wrote, so the figures double as a
check that the delimited output is plot-ready.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import read_history  # noqa: E402

SHARED_COLOR = "#1f77b4"
OUTLIER_COLOR = "#d62728"
STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
}


def figsize(width=4.5, ratio=None):
    ratio = ratio or (math.sqrt(5) - 1.0) / 2.0
    return (width, width * ratio)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_dynamics(history_path, out_path, title=None):
    """Target accuracy and selected group count per update."""
    rows = read_history(history_path)
    it = [int(r["iteration"]) for r in rows]
    acc = [float(r["target_acc"]) for r in rows]
    k = [int(r["k_star"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.plot(it, acc, color="k", marker="o", ms=3, lw=1, label="target accuracy")
        ax.set_xlabel("iteration")
        ax.set_ylabel("target test accuracy")
        ax.set_ylim(0, 1)
        ax2 = ax.twinx()
        ax2.step(it, k, where="post", color=OUTLIER_COLOR, lw=1.2, label="k*")
        ax2.set_ylabel("number of groups k*")
        ax2.set_ylim(0.5, 3.5)
        ax2.set_yticks([1, 2, 3])
        if title:
            ax.set_title(title)
        return _save(fig, out_path)


def plot_weight_histogram(weights_final_path, out_path, title=None):
    """Final class weights, shared classes versus source-only classes."""
    data = json.loads(Path(weights_final_path).read_text())
    shared, outlier = [], []
    for run in data["runs"]:
        sh = set(run["shared_classes"])
        for j, w in enumerate(run["weights"]):
            (shared if j in sh else outlier).append(float(w))
    bins = [i / 10 for i in range(11)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.hist(
            [shared, outlier],
            bins=bins,
            color=[SHARED_COLOR, OUTLIER_COLOR],
            label=["shared", "outlier"],
        )
        ax.set_xlabel("class weight")
        ax.set_ylabel("classes (all seeds)")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, out_path)


def plot_summary(summary_path, out_path, kind):
    data = json.loads(Path(summary_path).read_text())
    conds = data["conditions"]
    names = [c["condition"] for c in conds]
    means = [c["mean_accuracy"] for c in conds]
    stds = [c["std_accuracy"] for c in conds]
    with plt.rc_context(STYLE):
        if kind == "class-sweep":
            fig, ax = plt.subplots(figsize=figsize())
            xs = [int(n.rsplit("_", 1)[1]) for n in names]
            ax.errorbar(xs, means, yerr=stds, marker="o", color="k", capsize=3)
            ax.set_xlabel("number of target classes")
            ax.set_xticks(xs)
        else:
            fig, ax = plt.subplots(figsize=figsize(5.5, 0.55))
            pos = range(len(names))
            ax.bar(pos, means, yerr=stds, color="0.6", capsize=3)
            ax.set_xticks(list(pos))
            ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("final target accuracy")
        ax.set_ylim(0, 1)
        return _save(fig, out_path)


def render_experiment(run_dir, manifest, condition_names):
    """Write every figure for one experiment directory; returns the paths."""
    run_dir = Path(run_dir)
    paths = []
    for name in condition_names:
        cdir = run_dir / name
        for s in manifest.seeds:
            paths.append(
                plot_dynamics(
                    cdir / f"seed_{s}" / "history.csv",
                    cdir / "figures" / f"dynamics_seed_{s}.png",
                    f"{name}, seed {s}",
                )
            )
        paths.append(
            plot_weight_histogram(
                cdir / "weights_final.json", cdir / "figures" / "final_weights.png", name
            )
        )
    paths.append(
        plot_summary(run_dir / "summary.json", run_dir / "figures" / "summary.png", manifest.kind)
    )
    return paths
