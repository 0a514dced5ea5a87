"""Isolation forest."""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import Any

import numpy as np

from .base import DetectorKind, DetectorModel, FitError, check_matrix
from .trees import Tree, _Builder


@lru_cache(maxsize=None)
def harmonic(k: int) -> float:
    """Exact k-th harmonic number (H(0) = 0)."""
    return math.fsum(1.0 / i for i in range(1, k + 1))


def average_path_length(n: int) -> float:
    """c(n) = 2 H(n-1) - 2 (n-1) / n, the mean unsuccessful-search depth of a BST."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


def _isolation_tree(X: np.ndarray, height_limit: int, rng: np.random.Generator) -> Tree:
    b = _Builder()

    def grow(idx: np.ndarray, depth: int) -> int:
        if depth >= height_limit or idx.size <= 1:
            return b.leaf(depth + average_path_length(idx.size))
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            return b.leaf(depth + average_path_length(idx.size))
        f = int(varying[rng.integers(varying.size)])
        thr = float(rng.uniform(lo[f], hi[f]))
        if thr <= lo[f]:
            thr = float(np.nextafter(lo[f], hi[f]))
        node = b.split(f, thr)
        mask = sub[:, f] < thr
        li = grow(idx[mask], depth + 1)
        ri = grow(idx[~mask], depth + 1)
        b.left[node], b.right[node] = li, ri
        return node

    grow(np.arange(X.shape[0]), 0)
    return b.build()


class IsolationForest(DetectorModel):
    kind = DetectorKind.ISOLATION_FOREST

    def __init__(self, trees: list[Tree], subsample_size: int, **common: Any):
        super().__init__(**common)
        self.trees = trees
        self.subsample_size = int(subsample_size)

    def mean_path_length(self, Z: np.ndarray) -> np.ndarray:
        return np.mean([t.predict(Z) for t in self.trees], axis=0)

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        return 2.0 ** (-self.mean_path_length(Z) / average_path_length(self.subsample_size))

    def _state(self) -> dict[str, Any]:
        return {"subsample_size": self.subsample_size, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> IsolationForest:
        return cls([Tree.from_dict(t) for t in state["trees"]], state["subsample_size"], **common)


IFOREST_DEFAULTS = {"trees": 100, "subsample_size": 256, "seed": 0}


def fit_isolation_forest(X_normal: Any, params: dict[str, Any] | None = None) -> IsolationForest:
    p = {**IFOREST_DEFAULTS, **(params or {})}
    X = check_matrix(X_normal)
    n = X.shape[0]
    if n < 2:
        raise FitError("isolation forest needs at least two rows")
    psi = int(p["subsample_size"])
    if psi > n:
        warnings.warn(f"subsample_size {psi} exceeds {n} rows; using {n}", stacklevel=2)
        psi = n
    height = math.ceil(math.log2(psi))
    trees = []
    for ss in np.random.SeedSequence(int(p["seed"])).spawn(int(p["trees"])):
        rng = np.random.default_rng(ss)
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(_isolation_tree(X[rows], height, rng))
    return IsolationForest(
        trees, psi, params={**p, "subsample_size": psi}, n_features=X.shape[1],
        scaler=None, decision_threshold=0.5,
    )
