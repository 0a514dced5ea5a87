"""Gradient-boosted trees (second-order, logistic loss) and random forests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .base import DetectorKind, DetectorModel, FitError, check_binary, check_matrix

LEAF = -1


@dataclass
class Tree:
    """Binary tree in flat arrays; rows with ``x[feature] < threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def depth(self) -> int:
        def d(i: int) -> int:
            if self.feature[i] == LEAF:
                return 0
            return 1 + max(d(self.left[i]), d(self.right[i]))

        return d(0)

    def to_dict(self, i: int = 0) -> dict[str, Any]:
        if self.feature[i] == LEAF:
            return {"value": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_dict(int(self.left[i])),
            "right": self.to_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Tree:
        b = _Builder()

        def walk(node: dict[str, Any]) -> int:
            if "value" in node:
                return b.leaf(node["value"])
            i = b.split(node["feature"], node["threshold"])
            b.left[i] = walk(node["left"])
            b.right[i] = walk(node["right"])
            return i

        walk(d)
        return b.build()


class _Builder:
    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new(self, f: int, t: float, v: float) -> int:
        self.feature.append(f)
        self.threshold.append(t)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(v)
        return len(self.feature) - 1

    def leaf(self, value: float) -> int:
        return self._new(LEAF, np.nan, value)

    def split(self, feature: int, threshold: float) -> int:
        return self._new(feature, threshold, np.nan)

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=int),
            np.array(self.threshold, dtype=float),
            np.array(self.left, dtype=int),
            np.array(self.right, dtype=int),
            np.array(self.value, dtype=float),
        )


def _midpoint(a: float, b: float) -> float:
    t = a + (b - a) / 2.0
    return b if t <= a else t


# A split scorer receives left-side cumulative stats at every cut position plus
# node totals and returns (gain per position, validity mask).
Scorer = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _best_split(
    X: np.ndarray, idx: np.ndarray, stats: np.ndarray, features: np.ndarray, scorer: Scorer
) -> tuple[float, int, float] | None:
    """Highest-gain (gain, feature, threshold) over ``features``; first wins ties."""
    best: tuple[float, int, float] | None = None
    totals = stats[idx].sum(axis=0)
    for f in features:
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        cum = np.cumsum(stats[idx][order], axis=0)[cut]
        gain, ok = scorer(cum, totals, cut)
        if not ok.any():
            continue
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), int(f), _midpoint(xs[cut[k]], xs[cut[k] + 1]))
    return best


def _grow(
    X: np.ndarray,
    stats: np.ndarray,
    max_depth: int | None,
    scorer: Scorer,
    leaf_value: Callable[[np.ndarray], float],
    stop: Callable[[np.ndarray], bool],
    features_for_node: Callable[[], np.ndarray],
    min_gain: float,
    rows: np.ndarray | None = None,
) -> Tree:
    b = _Builder()
    root_rows = np.arange(X.shape[0]) if rows is None else rows

    def grow(idx: np.ndarray, depth: int) -> int:
        if (max_depth is not None and depth >= max_depth) or stop(idx):
            return b.leaf(leaf_value(idx))
        order = features_for_node()
        found = _best_split(X, idx, stats, order, scorer)
        if found is None and len(order) < X.shape[1]:
            rest = np.setdiff1d(np.arange(X.shape[1]), order)
            found = _best_split(X, idx, stats, rest, scorer)
        if found is None or found[0] < min_gain:
            return b.leaf(leaf_value(idx))
        _, f, thr = found
        node = b.split(f, thr)
        mask = X[idx, f] < thr
        li = grow(idx[mask], depth + 1)
        ri = grow(idx[~mask], depth + 1)
        b.left[node], b.right[node] = li, ri
        return node

    grow(root_rows, 0)
    return b.build()


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_grad_hess(raw: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative of the log-loss w.r.t. the raw score."""
    p = sigmoid(raw)
    return p - y, p * (1.0 - p)


def split_gain(GL: Any, HL: Any, GR: Any, HR: Any, lam: float) -> Any:
    return GL**2 / (HL + lam) + GR**2 / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)


def build_boosting_tree(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, max_depth: int, lam: float, min_child_weight: float
) -> Tree:
    stats = np.column_stack([g, h])

    def scorer(cum: np.ndarray, tot: np.ndarray, cut: np.ndarray):
        GL, HL = cum[:, 0], cum[:, 1]
        GR, HR = tot[0] - GL, tot[1] - HL
        ok = (HL >= min_child_weight) & (HR >= min_child_weight) & (HL + lam > 0) & (HR + lam > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = split_gain(GL, HL, GR, HR, lam)
        return gain, ok & np.isfinite(gain)

    def leaf_value(idx: np.ndarray) -> float:
        G, H = g[idx].sum(), h[idx].sum()
        return float(-G / max(H + lam, 1e-12))

    all_features = np.arange(X.shape[1])
    return _grow(
        X, stats, max_depth, scorer, leaf_value,
        stop=lambda idx: idx.size < 2,
        features_for_node=lambda: all_features,
        min_gain=1e-12,
    )


class GradientBoostedTrees(DetectorModel):
    kind = DetectorKind.GBT

    def __init__(self, trees: list[Tree], learning_rate: float, **common: Any):
        super().__init__(**common)
        self.trees = trees
        self.learning_rate = learning_rate

    def raw_margin(self, Z: np.ndarray) -> np.ndarray:
        out = np.zeros(Z.shape[0])
        for t in self.trees:
            out += self.learning_rate * t.predict(Z)
        return out

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        return sigmoid(self.raw_margin(Z))

    def _state(self) -> dict[str, Any]:
        return {"learning_rate": self.learning_rate, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> GradientBoostedTrees:
        return cls([Tree.from_dict(t) for t in state["trees"]], state["learning_rate"], **common)


GBT_DEFAULTS = {"trees": 100, "depth": 4, "learning_rate": 0.3, "lambda": 1.0, "min_child_weight": 1.0}


def fit_gbt(X: Any, y: Any, params: dict[str, Any] | None = None) -> GradientBoostedTrees:
    """Second-order boosting on the logistic loss, starting from raw score 0."""
    p = {**GBT_DEFAULTS, **(params or {})}
    X = check_matrix(X)
    y = check_binary(X, y)
    raw = np.zeros(X.shape[0])
    trees = []
    for _ in range(int(p["trees"])):
        g, h = logistic_grad_hess(raw, y)
        tree = build_boosting_tree(X, g, h, int(p["depth"]), float(p["lambda"]), float(p["min_child_weight"]))
        trees.append(tree)
        raw += p["learning_rate"] * tree.predict(X)
    return GradientBoostedTrees(
        trees, float(p["learning_rate"]),
        params=p, n_features=X.shape[1], scaler=None, decision_threshold=0.5,
    )


def build_gini_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    max_depth: int | None,
    max_features: int,
    min_samples_leaf: int,
    rng: np.random.Generator,
) -> Tree:
    stats = np.column_stack([y.astype(float), np.ones(len(y))])

    def scorer(cum: np.ndarray, tot: np.ndarray, cut: np.ndarray):
        pl, nl = cum[:, 0], cum[:, 1]
        pr, nr = tot[0] - pl, tot[1] - nl
        n = tot[1]

        def gini(pos, cnt):
            q = pos / cnt
            return 2.0 * q * (1.0 - q)

        ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            parent = gini(tot[0], n)
            gain = parent - (nl / n) * gini(pl, nl) - (nr / n) * gini(pr, nr)
        return gain, ok

    def leaf_value(idx: np.ndarray) -> float:
        return float(y[idx].mean())

    def pure(idx: np.ndarray) -> bool:
        s = y[idx].sum()
        return idx.size < 2 * min_samples_leaf or s == 0 or s == idx.size

    n_feat = X.shape[1]
    return _grow(
        X, stats, max_depth, scorer, leaf_value,
        stop=pure,
        features_for_node=lambda: np.sort(rng.choice(n_feat, size=max_features, replace=False)),
        min_gain=0.0,
        rows=rows,
    )


class RandomForest(DetectorModel):
    kind = DetectorKind.RANDOM_FOREST

    def __init__(self, trees: list[Tree], **common: Any):
        super().__init__(**common)
        self.trees = trees

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        votes = np.zeros(Z.shape[0])
        for t in self.trees:
            votes += t.predict(Z) > 0.5
        return votes / len(self.trees)

    def _state(self) -> dict[str, Any]:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> RandomForest:
        return cls([Tree.from_dict(t) for t in state["trees"]], **common)


RF_DEFAULTS = {
    "trees": 100,
    "depth": None,
    "feature_subsample": "sqrt",
    "min_samples_leaf": 1,
    "bootstrap": True,
    "seed": 0,
}


def _max_features(spec: Any, n: int) -> int:
    if spec in (None, "all"):
        return n
    if spec == "sqrt":
        return max(1, int(np.sqrt(n)))
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, int(round(spec * n)))
    if isinstance(spec, int) and 1 <= spec <= n:
        return spec
    raise FitError(f"invalid feature_subsample {spec!r}")


def fit_random_forest(X: Any, y: Any, params: dict[str, Any] | None = None) -> RandomForest:
    """Bagged Gini trees; the score is the fraction of trees voting anomaly."""
    p = {**RF_DEFAULTS, **(params or {})}
    X = check_matrix(X)
    y = check_binary(X, y)
    n = X.shape[0]
    k = _max_features(p["feature_subsample"], X.shape[1])
    depth = None if p["depth"] is None else int(p["depth"])
    seeds = np.random.SeedSequence(int(p["seed"])).spawn(int(p["trees"]))
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, n, size=n) if p["bootstrap"] else np.arange(n)
        trees.append(build_gini_tree(X, y, rows, depth, k, int(p["min_samples_leaf"]), rng))
    return RandomForest(trees, params=p, n_features=X.shape[1], scaler=None, decision_threshold=0.5)
