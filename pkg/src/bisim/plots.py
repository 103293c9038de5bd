"""Figure rendering for the CLI report paths.

The delimited files stay the canonical outputs; these are companion PNGs
rendered headlessly next to them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_metric_heatmap(metric: np.ndarray, path, title: str = "metric",
                        labels=None) -> None:
    metric = np.asarray(metric, dtype=np.float64)
    n = metric.shape[0]
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    img = ax.imshow(metric, cmap="viridis", origin="upper")
    fig.colorbar(img, ax=ax, shrink=0.85)
    ax.set_title(f"{title} ({n} states)")
    ax.set_xlabel("state t")
    ax.set_ylabel("state s")
    if labels is not None and n <= 12:
        ax.set_xticks(range(n), labels, rotation=90, fontsize=7)
        ax.set_yticks(range(n), labels, fontsize=7)
    _finish(fig, path)


def save_training_curves(loss_rows, path) -> None:
    """Loss per step on a log axis with the bootstrap weight overlaid."""
    steps = [row[0] for row in loss_rows]
    losses = [row[1] for row in loss_rows]
    betas = [row[2] for row in loss_rows]
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.plot(steps, losses, lw=0.8, color="tab:blue", label="loss")
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    twin = ax.twinx()
    twin.plot(steps, betas, lw=1.2, color="tab:orange", label="beta")
    twin.set_ylabel("beta")
    twin.set_ylim(-0.02, 1.02)
    ax.set_title("training loss and bootstrap weight")
    _finish(fig, path)


def save_error_curves(error_rows, path) -> None:
    steps = [row[0] for row in error_rows]
    absolute = [row[1] for row in error_rows]
    normalized = [row[2] for row in error_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.6))
    ax1.plot(steps, absolute, marker="o", ms=3, color="tab:blue")
    ax1.set_title("absolute error")
    ax1.set_xlabel("step")
    if any(v is not None for v in normalized):
        pts = [(s, v) for s, v in zip(steps, normalized) if v is not None]
        ax2.plot([p[0] for p in pts], [p[1] for p in pts],
                 marker="o", ms=3, color="tab:green")
    ax2.set_title("normalized error")
    ax2.set_xlabel("step")
    _finish(fig, path)


def save_error_report(report_dict: dict, path) -> None:
    keys = ["absolute_error", "normalized_error", "diagonal_residual",
            "asymmetry"]
    vals = [report_dict.get(k) for k in keys]
    vals = [0.0 if v is None else float(v) for v in vals]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.bar(range(len(keys)), vals, color="tab:purple")
    ax.set_xticks(range(len(keys)), [k.replace("_", "\n") for k in keys],
                  fontsize=8)
    ax.set_title("approximation error report")
    _finish(fig, path)


def save_cluster_sizes(labels, epsilon: float, path) -> None:
    labels = np.asarray(labels)
    num = int(labels.max()) + 1 if labels.size else 0
    sizes = np.bincount(labels, minlength=num)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.bar(range(num), sizes, color="tab:cyan")
    ax.set_xlabel("cluster id")
    ax.set_ylabel("members")
    ax.set_title(f"{num} clusters at threshold {epsilon:g}")
    _finish(fig, path)
