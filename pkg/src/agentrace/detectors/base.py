"""Shared detector plumbing: scaling, thresholding, persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

MODEL_FORMAT = "agentrace-model/1"


class DetectorKind(str, Enum):
    GBT = "GBT"
    RANDOM_FOREST = "RANDOM_FOREST"
    LOGISTIC = "LOGISTIC"
    SVM = "SVM"
    NAIVE_BAYES = "NAIVE_BAYES"
    SVDD = "SVDD"
    ISOLATION_FOREST = "ISOLATION_FOREST"
    KMEANS = "KMEANS"


SUPERVISED = (
    DetectorKind.GBT,
    DetectorKind.RANDOM_FOREST,
    DetectorKind.LOGISTIC,
    DetectorKind.SVM,
    DetectorKind.NAIVE_BAYES,
)
ONE_CLASS = (DetectorKind.SVDD, DetectorKind.ISOLATION_FOREST)
UNSUPERVISED = (DetectorKind.KMEANS,)


def regime(kind: DetectorKind) -> str:
    if kind in SUPERVISED:
        return "supervised"
    if kind in ONE_CLASS:
        return "one_class"
    return "unsupervised"


class FitError(ValueError):
    pass


def check_matrix(X: Any, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise FitError(f"expected a 2D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise FitError(f"expected {n_features} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise FitError("feature matrix contains non-finite values")
    return X


def check_binary(X: np.ndarray, y: Any) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise FitError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
    if not np.isin(y, (0, 1)).all():
        raise FitError("labels must be 0/1")
    y = y.astype(int)
    if len(np.unique(y)) < 2:
        raise FitError("training labels contain a single class")
    return y


@dataclass
class StandardScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> StandardScaler:
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict[str, list[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict[str, list[float]]) -> StandardScaler:
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


class DetectorModel:
    """A fitted detector: ``score_anomaly`` is higher for more anomalous rows and
    a row is labeled anomalous iff its score exceeds ``decision_threshold``.

    Subclasses implement ``_raw_score`` on already-scaled input plus the
    ``_state``/``_from_state`` persistence pair.
    """

    kind: ClassVar[DetectorKind]
    registry: ClassVar[dict[DetectorKind, type[DetectorModel]]] = {}

    def __init__(self, params: dict[str, Any], n_features: int,
                 scaler: StandardScaler | None, decision_threshold: float):
        self.params = dict(params)
        self.n_features = n_features
        self.scaler = scaler
        self.decision_threshold = float(decision_threshold)

    def __init_subclass__(cls, **kw: Any) -> None:
        super().__init_subclass__(**kw)
        if "kind" in cls.__dict__:
            DetectorModel.registry[cls.kind] = cls

    def _prepare(self, X: Any) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} columns, got {X.shape[1]}")
        return self.scaler.transform(X) if self.scaler is not None else X

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score_anomaly(self, X: Any) -> np.ndarray:
        return self._raw_score(self._prepare(X))

    def predict(self, X: Any, threshold: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        scores = self.score_anomaly(X)
        t = self.decision_threshold if threshold is None else threshold
        return (scores > t).astype(int), scores

    def with_threshold(self, threshold: float) -> DetectorModel:
        self.decision_threshold = float(threshold)
        return self

    # persistence
    def _state(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> DetectorModel:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "kind": self.kind.value,
            "params": self.params,
            "n_features": self.n_features,
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "decision_threshold": self.decision_threshold,
            "fitted": self._state(),
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> DetectorModel:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        cls = DetectorModel.registry[DetectorKind(d["kind"])]
        scaler = None if d["scaler"] is None else StandardScaler.from_dict(d["scaler"])
        return cls._from_state(
            d["fitted"],
            params=d["params"],
            n_features=int(d["n_features"]),
            scaler=scaler,
            decision_threshold=float(d["decision_threshold"]),
        )


def predict(model: DetectorModel, X: Any, threshold: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1 = anomaly) and anomaly scores for each row of ``X``."""
    return model.predict(X, threshold)


def save_model(model: DetectorModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> DetectorModel:
    with open(path, encoding="utf-8") as fh:
        return DetectorModel.from_dict(json.load(fh))
