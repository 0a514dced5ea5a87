"""Exhaustive hyperparameter search scored on a validation split."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ..detectors import DetectorKind, DetectorModel, fit_detector, regime
from .metrics import Metrics, compute_metrics, f1_from_counts

# Detectors whose threshold is picked on validation after fitting.
TUNED_THRESHOLD = (DetectorKind.SVDD, DetectorKind.ISOLATION_FOREST)


def default_grids(seed: int = 0) -> dict[DetectorKind, dict[str, list[Any]]]:
    return {
        DetectorKind.GBT: {"trees": [100], "depth": [3, 5], "learning_rate": [0.1, 0.3], "lambda": [1.0]},
        DetectorKind.RANDOM_FOREST: {"trees": [100], "depth": [8, None], "seed": [seed]},
        DetectorKind.LOGISTIC: {"l2": [1e-4, 1e-2, 1.0]},
        DetectorKind.SVM: {"C": [1.0, 10.0], "kernel": ["rbf"], "gamma": ["scale"]},
        DetectorKind.NAIVE_BAYES: {"var_floor": [1e-9]},
        DetectorKind.SVDD: {"C": [0.02, 0.05, 0.1], "gamma": ["scale"]},
        DetectorKind.ISOLATION_FOREST: {"trees": [100], "subsample_size": [128, 256], "seed": [seed]},
        DetectorKind.KMEANS: {
            "k": [9, 18, 36],
            "size_fraction_threshold": [0.5, 1.0, 1.5],
            "density_factor": [1.5, 2.0],
            "seed": [seed],
        },
    }


def _order_key(value: Any) -> tuple[int, Any]:
    # None < numbers < strings, so mixed-type grids still compare.
    if value is None:
        return (0, 0)
    if isinstance(value, (bool, int, float, np.integer, np.floating)):
        return (1, float(value))
    return (2, str(value))


def grid_cells(grid: Mapping[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Cartesian product of the grid, keys in sorted order."""
    keys = sorted(grid)
    for k in keys:
        if len(grid[k]) == 0:
            raise ValueError(f"grid axis {k!r} is empty")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def cell_key(params: Mapping[str, Any]) -> tuple:
    return tuple(_order_key(params[k]) for k in sorted(params))


def best_threshold(scores: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Threshold maximising validation macro-F1 for the rule ``score > t``.

    Candidates sit midway between consecutive distinct scores, plus one below
    the minimum. Ties go to the lowest threshold.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y).astype(int)
    finite = np.isfinite(scores)
    uniq = np.unique(scores[finite]) if finite.any() else np.array([0.0])
    cands = np.concatenate([[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1]]])
    pos, neg = int(y.sum()), int((1 - y).sum())
    best_t, best_f = float(cands[0]), -1.0
    for t in cands:
        pred = scores > t
        tp = int(np.sum(pred & (y == 1)))
        fp = int(np.sum(pred & (y == 0)))
        fn, tn = pos - tp, neg - fp
        f = (f1_from_counts(tp, fp, fn) + f1_from_counts(tn, fn, fp)) / 2.0
        if f > best_f + 1e-12:
            best_t, best_f = float(t), f
    return best_t, best_f


def fit_for_regime(kind: DetectorKind, X: np.ndarray, y: np.ndarray, params: dict[str, Any]) -> DetectorModel:
    """Supervised kinds see labels; one-class kinds see normal rows only;
    clustering sees all rows without labels."""
    r = regime(kind)
    if r == "supervised":
        return fit_detector(kind, X, y, params)
    if r == "one_class":
        return fit_detector(kind, X[np.asarray(y) == 0], None, params)
    return fit_detector(kind, X, None, params)


@dataclass
class CellResult:
    params: dict[str, Any]
    score: float | None
    threshold: float | None = None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"params": self.params, "score": self.score, "threshold": self.threshold, "error": self.error}


@dataclass
class SearchResult:
    kind: DetectorKind
    cells: list[CellResult]
    best_params: dict[str, Any] | None = None
    best_score: float | None = None
    best_model: DetectorModel | None = None
    val_metrics: Metrics | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.best_model is not None


def grid_search(
    kind: DetectorKind,
    grid: Mapping[str, Sequence[Any]],
    train: tuple[np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray],
) -> SearchResult:
    """Fit every cell on ``train`` and keep the one with the best validation
    macro-F1. Ties go to the lexicographically smaller parameter tuple.

    A failing cell is recorded with its error and skipped.
    """
    kind = DetectorKind(kind)
    Xtr, ytr = train
    Xva, yva = val
    result = SearchResult(kind=kind, cells=[])
    best_key = None
    for params in grid_cells(grid):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                model = fit_for_regime(kind, Xtr, ytr, params)
                scores = model.score_anomaly(Xva)
                if kind in TUNED_THRESHOLD:
                    t, _ = best_threshold(scores, yva)
                    model.with_threshold(t)
                metrics = compute_metrics(yva, (scores > model.decision_threshold).astype(int))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                result.cells.append(CellResult(params, None, error=f"{type(exc).__name__}: {exc}"))
                continue
        result.warnings.extend(f"{params}: {w.message}" for w in caught)
        cell = CellResult(params, metrics.macro_f1, threshold=model.decision_threshold)
        result.cells.append(cell)
        key = (-metrics.macro_f1, cell_key(params))
        if best_key is None or key < best_key:
            best_key = key
            result.best_params = params
            result.best_score = metrics.macro_f1
            result.best_model = model
            result.val_metrics = metrics
    return result


__all__ = [
    "CellResult",
    "SearchResult",
    "TUNED_THRESHOLD",
    "best_threshold",
    "cell_key",
    "default_grids",
    "fit_for_regime",
    "grid_cells",
    "grid_search",
]
