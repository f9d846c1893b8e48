"""Figure rendering for the report outputs.

Every figure lands next to its CSV/JSON counterpart. Rendering is
deterministic (Agg backend, fixed dpi) so repeated runs produce identical
files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def save_stacked_weights(weights: np.ndarray, series_labels: list[str],
                         path: str | Path, title: str,
                         xlabel: str = "ad index") -> None:
    """Stacked bars, one bar per ad, one colored band per weight series."""
    n, k = weights.shape
    fig, ax = plt.subplots(figsize=(9, 4))
    x = np.arange(n)
    cmap = plt.get_cmap("tab20")
    bottom = np.zeros(n)
    for j in range(k):
        ax.bar(x, weights[:, j], bottom=bottom, width=1.0, linewidth=0,
               color=cmap(j % 20), label=series_labels[j])
        bottom += weights[:, j]
    ax.set_xlim(-0.5, n - 0.5)
    ax.set_ylim(0, 1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("attention weight")
    ax.set_title(title)
    if k <= 20:
        ax.legend(loc="upper right", fontsize=7, ncol=max(1, k // 8))
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_weight_means(means: np.ndarray, labels: list[str], path: str | Path,
                      title: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(labels)), 3.2))
    ax.bar(np.arange(len(means)), means, color="#4878cf")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("mean attention weight")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_correlation_bars(keys: list[str], values: list[float],
                          path: str | Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(max(5.0, 0.45 * len(keys)), 3.6))
    ax.bar(np.arange(len(keys)), values, color="#d65f5f")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(np.arange(len(keys)))
    ax.set_xticklabels(keys, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("association with CTR target")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_prediction_scatter(targets: np.ndarray, predictions: np.ndarray,
                            path: str | Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.scatter(predictions, targets, s=6, alpha=0.4, linewidths=0,
               color="#4878cf")
    lo = float(min(predictions.min(), targets.min()))
    hi = float(max(predictions.max(), targets.max()))
    pad = 0.05 * (hi - lo + 1e-9)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad],
            color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_campaign_metric(run_ids: list[str], values: list[float | None],
                         path: str | Path, metric: str) -> None:
    plotted = [(i, v) for i, v in zip(run_ids, values) if v is not None]
    fig, ax = plt.subplots(figsize=(max(5.0, 0.5 * max(len(plotted), 1)), 3.6))
    if plotted:
        ids, vals = zip(*plotted)
        ax.bar(np.arange(len(ids)), vals, color="#6acc65")
        ax.set_xticks(np.arange(len(ids)))
        ax.set_xticklabels(ids, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel(metric)
    ax.set_title(f"ablation campaign: {metric}")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
