"""K-means with small / low-density cluster flagging."""

from __future__ import annotations

from typing import Any

import numpy as np

from .base import DetectorKind, DetectorModel, FitError, StandardScaler, check_matrix


def _sqdist(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.maximum((Z**2).sum(1)[:, None] + (C**2).sum(1)[None, :] - 2.0 * Z @ C.T, 0.0)


def kmeans_pp(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = Z.shape[0]
    centers = [Z[rng.integers(n)]]
    d2 = _sqdist(Z, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        centers.append(Z[idx])
        d2 = np.minimum(d2, _sqdist(Z, Z[idx : idx + 1])[:, 0])
    return np.array(centers)


def lloyd(Z: np.ndarray, centers: np.ndarray, max_iter: int):
    """Alternate assignment and mean updates.

    Returns ``(centers, labels, history)`` where ``history`` holds the inertia
    after every assignment step. Empty clusters keep their previous centre.
    """
    history = []
    centers = centers.copy()
    labels = np.zeros(Z.shape[0], dtype=int)
    for _ in range(max_iter):
        d2 = _sqdist(Z, centers)
        labels = d2.argmin(1)
        history.append(float(d2[np.arange(len(Z)), labels].sum()))
        new = centers.copy()
        for c in range(len(centers)):
            members = labels == c
            if members.any():
                new[c] = Z[members].mean(0)
        if np.array_equal(new, centers):
            break
        centers = new
    else:
        d2 = _sqdist(Z, centers)
        labels = d2.argmin(1)
        history.append(float(d2[np.arange(len(Z)), labels].sum()))
    return centers, labels, history


def flag_clusters(
    Z: np.ndarray, centers: np.ndarray, labels: np.ndarray, size_fraction: float, density_factor: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flag clusters that are small or spread out relative to the median cluster."""
    k, n = len(centers), len(Z)
    sizes = np.bincount(labels, minlength=k)
    spread = np.zeros(k)
    for c in range(k):
        if sizes[c]:
            spread[c] = np.sqrt(((Z[labels == c] - centers[c]) ** 2).sum(1)).mean()
    median = np.median(spread[sizes > 0])
    small = sizes < size_fraction * n / k
    sparse = spread > density_factor * median
    return small | sparse, sizes, spread


class KMeansDetector(DetectorModel):
    """Score = distance to nearest normal centroid minus distance to nearest
    flagged centroid, so a positive score means the nearest centroid is flagged.

    When no centroid (or every centroid) is flagged the score stays finite and
    keeps its sign: in (-1, 0) or >= 1 respectively, increasing with distance.
    """

    kind = DetectorKind.KMEANS

    def __init__(self, centers: np.ndarray, flags: np.ndarray, inertia: float, **common: Any):
        super().__init__(**common)
        self.centers = np.asarray(centers, dtype=float)
        self.flags = np.asarray(flags, dtype=bool)
        self.inertia = float(inertia)

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        d = np.sqrt(_sqdist(Z, self.centers))
        if not self.flags.any():
            # Nothing flagged: every row is normal, farther rows score higher.
            return -1.0 / (1.0 + d.min(1))
        if self.flags.all():
            return 1.0 + d.min(1)
        return d[:, ~self.flags].min(1) - d[:, self.flags].min(1)

    def _state(self) -> dict[str, Any]:
        return {
            "centroids": [
                {"center": c.tolist(), "anomalous": bool(f)} for c, f in zip(self.centers, self.flags)
            ],
            "inertia": self.inertia,
        }

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> KMeansDetector:
        cs = state["centroids"]
        return cls(
            np.array([c["center"] for c in cs]), np.array([c["anomalous"] for c in cs]),
            state["inertia"], **common,
        )


KMEANS_DEFAULTS = {
    "k": 8,
    "max_iter": 300,
    "n_init": 5,
    "seed": 0,
    "size_fraction_threshold": 0.5,
    "density_factor": 2.0,
}


def fit_kmeans(X: Any, params: dict[str, Any] | None = None) -> KMeansDetector:
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` by inertia."""
    p = {**KMEANS_DEFAULTS, **(params or {})}
    X = check_matrix(X)
    k = int(p["k"])
    if not 1 <= k <= X.shape[0]:
        raise FitError(f"k={k} must lie in [1, {X.shape[0]}]")
    scaler = StandardScaler.fit(X)
    Z = scaler.transform(X)
    best = None
    for ss in np.random.SeedSequence(int(p["seed"])).spawn(int(p["n_init"])):
        rng = np.random.default_rng(ss)
        centers, labels, history = lloyd(Z, kmeans_pp(Z, k, rng), int(p["max_iter"]))
        if best is None or history[-1] < best[2][-1]:
            best = (centers, labels, history)
    centers, labels, history = best
    flags, sizes, spread = flag_clusters(
        Z, centers, labels, float(p["size_fraction_threshold"]), float(p["density_factor"])
    )
    model = KMeansDetector(
        centers, flags, history[-1], params=p, n_features=X.shape[1], scaler=scaler, decision_threshold=0.0
    )
    model.inertia_history = history
    model.cluster_sizes = sizes
    model.cluster_spread = spread
    return model
