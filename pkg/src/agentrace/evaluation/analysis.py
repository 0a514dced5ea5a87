"""Post-hoc analysis: permutation importance, false-negative profiling, 2-D projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..detectors import DetectorModel
from ..features import FEATURE_NAMES, PATH_FEATURES
from .metrics import macro_f1


@dataclass(frozen=True)
class Importance:
    feature: str
    mean: float
    std: float

    def to_dict(self) -> dict[str, Any]:
        return {"feature": self.feature, "mean": self.mean, "std": self.std}


def permutation_importance(
    model: DetectorModel,
    X: np.ndarray,
    y: np.ndarray,
    repeats: int = 10,
    seed: int = 0,
    feature_names: Sequence[str] = FEATURE_NAMES,
) -> list[Importance]:
    """Mean drop in macro-F1 when one column is shuffled, ranked descending.

    Ties keep column order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.shape[1] != len(feature_names):
        raise ValueError(f"{X.shape[1]} columns but {len(feature_names)} names")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    base = macro_f1(y, model.predict(X)[0])
    rng = np.random.default_rng(seed)
    out = []
    for j, name in enumerate(feature_names):
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            drops.append(base - macro_f1(y, model.predict(Xp)[0]))
        out.append(Importance(name, float(np.mean(drops)), float(np.std(drops))))
    order = sorted(range(len(out)), key=lambda i: (-out[i].mean, i))
    return [out[i] for i in order]


@dataclass
class FNAnalysis:
    """Profile of false negatives against true positives.

    ``mean_diff`` is the FN mean minus the TP mean per feature. The mode
    counts use the labeler's cycle/error/drift flags of each FN.
    """

    n_anomalies: int
    n_tp: int
    n_fn: int
    mean_diff: dict[str, float]
    mode_counts: dict[str, int]
    drift_only_fn: int
    drift_only_anomalies: int
    drift_only_fn_negative_path: int
    rows: list[dict[str, Any]]

    @property
    def fn_trace_ids(self) -> list[str]:
        return [r["trace_id"] for r in self.rows]

    @property
    def drift_only_fraction_fn(self) -> float:
        return self.drift_only_fn / self.n_fn if self.n_fn else 0.0

    @property
    def drift_only_fraction_anomalies(self) -> float:
        return self.drift_only_anomalies / self.n_anomalies if self.n_anomalies else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_anomalies": self.n_anomalies,
            "n_tp": self.n_tp,
            "n_fn": self.n_fn,
            "mean_diff": self.mean_diff,
            "mode_counts": self.mode_counts,
            "drift_only_fn": self.drift_only_fn,
            "drift_only_anomalies": self.drift_only_anomalies,
            "drift_only_fn_negative_path": self.drift_only_fn_negative_path,
            "drift_only_fraction_fn": self.drift_only_fraction_fn,
            "drift_only_fraction_anomalies": self.drift_only_fraction_anomalies,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FNAnalysis:
        keys = ("n_anomalies", "n_tp", "n_fn", "mean_diff", "mode_counts", "drift_only_fn",
                "drift_only_anomalies", "drift_only_fn_negative_path", "rows")
        return cls(**{k: d[k] for k in keys})


def fn_error_analysis(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    X: np.ndarray,
    modes: np.ndarray,
    trace_ids: Sequence[str] | None = None,
    feature_names: Sequence[str] = FEATURE_NAMES,
) -> FNAnalysis:
    """``modes`` is an (n, 3) 0/1 array of cycle, error, drift flags.

    Each FN row carries its features, its signed difference from the TP mean,
    and its mode flags. A drift-only FN has a negative path difference when
    the sum of its path feature differences from the TP mean is below zero.
    """
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    X = np.asarray(X, dtype=float)
    modes = np.asarray(modes).astype(bool).reshape(-1, 3)
    if not (len(y_true) == len(y_pred) == len(X) == len(modes)):
        raise ValueError("inputs must have the same number of rows")
    ids = list(trace_ids) if trace_ids is not None else [str(i) for i in range(len(y_true))]
    anom = y_true == 1
    fn = anom & (y_pred == 0)
    tp = anom & (y_pred == 1)
    drift_only = modes[:, 2] & ~modes[:, 0] & ~modes[:, 1]
    names = list(feature_names)
    tp_mean = X[tp].mean(0) if tp.any() else np.zeros(X.shape[1])
    diff = X[fn].mean(0) - tp_mean if (fn.any() and tp.any()) else np.zeros(X.shape[1])
    mean_diff = {n: float(d) for n, d in zip(names, diff)}
    path_cols = [names.index(p) for p in PATH_FEATURES if p in names]
    rows, neg = [], 0
    for i in np.flatnonzero(fn):
        d = X[i] - tp_mean if tp.any() else np.zeros(X.shape[1])
        if drift_only[i] and tp.any() and path_cols and d[path_cols].sum() < 0:
            neg += 1
        rows.append({
            "trace_id": ids[i],
            "cycle": bool(modes[i, 0]),
            "error": bool(modes[i, 1]),
            "drift": bool(modes[i, 2]),
            "features": {n: float(v) for n, v in zip(names, X[i])},
            "diff": {n: float(v) for n, v in zip(names, d)},
        })
    return FNAnalysis(
        n_anomalies=int(anom.sum()),
        n_tp=int(tp.sum()),
        n_fn=int(fn.sum()),
        mean_diff=mean_diff,
        mode_counts={m: int(modes[fn, i].sum()) for i, m in enumerate(("cycle", "error", "drift"))},
        drift_only_fn=int((fn & drift_only).sum()),
        drift_only_anomalies=int((anom & drift_only).sum()),
        drift_only_fn_negative_path=neg,
        rows=rows,
    )


@dataclass
class Projection:
    coords: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return ((np.asarray(X, dtype=float) - self.mean) / self.scale) @ self.components.T

    def reconstruct(self, coords: np.ndarray | None = None) -> np.ndarray:
        c = self.coords if coords is None else np.asarray(coords, dtype=float)
        return (c @ self.components) * self.scale + self.mean


def project_2d(X: np.ndarray, seed: int | None = None, n_components: int = 2) -> Projection:
    """PCA on standardized features.

    ``seed`` is accepted for interface symmetry with stochastic projections;
    PCA itself uses no randomness. Each component is signed so that its
    largest-magnitude loading is positive, which makes the output deterministic.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ValueError("need a 2D matrix with at least three rows")
    mean = X.mean(0)
    scale = X.std(0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    cov = Z.T @ Z / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 1e-12:
        raise ValueError("features have zero variance; projection is undefined")
    k = min(n_components, X.shape[1])
    comps = evecs[:, :k].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return Projection(
        coords=Z @ comps.T,
        components=comps,
        explained_variance_ratio=evals[:k] / total,
        mean=mean,
        scale=scale,
    )
