"""Static figures for benchmark and analysis outputs.

Everything renders through the Agg backend to PNG with fixed metadata, so a
rerun produces identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}
_COLORS = {0: "#4C72B0", 1: "#DD5555"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_projection(coords: np.ndarray, labels: Sequence[int], path: str | Path,
                    explained: Sequence[float] | None = None) -> Path:
    coords = np.asarray(coords, dtype=float)
    labels = np.asarray(labels).astype(int)
    fig, ax = plt.subplots(figsize=(6, 5))
    for cls, name in ((0, "normal"), (1, "anomaly")):
        m = labels == cls
        ax.scatter(coords[m, 0], coords[m, 1], s=6, alpha=0.6, c=_COLORS[cls], label=f"{name} ({m.sum()})")
    if explained is not None:
        ax.set_xlabel(f"PC1 ({100 * explained[0]:.1f}%)")
        ax.set_ylabel(f"PC2 ({100 * explained[1]:.1f}%)")
    else:
        ax.set_xlabel("PC1")
        ax.set_ylabel("PC2")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_importance(features: Sequence[str], means: Sequence[float], stds: Sequence[float],
                    path: str | Path, title: str = "") -> Path:
    n = len(features)
    fig, ax = plt.subplots(figsize=(6, 0.3 * n + 1.2))
    ypos = np.arange(n)[::-1]
    ax.barh(ypos, means, xerr=stds, color="#4C72B0", alpha=0.85)
    ax.set_yticks(ypos)
    ax.set_yticklabels(features, fontsize=8)
    ax.set_xlabel("mean macro-F1 drop when shuffled")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    return _save(fig, path)


def plot_model_comparison(models: Sequence[str], accuracy: Sequence[float], macro_f1: Sequence[float],
                          path: str | Path) -> Path:
    x = np.arange(len(models))
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(models) + 1), 4))
    ax.bar(x - 0.2, accuracy, width=0.4, label="accuracy", color="#4C72B0")
    ax.bar(x + 0.2, macro_f1, width=0.4, label="macro-F1", color="#55A868")
    ax.set_xticks(x)
    ax.set_xticklabels(models, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
