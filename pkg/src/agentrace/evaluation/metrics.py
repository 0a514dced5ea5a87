"""Binary classification metrics with anomaly as the positive class."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    return _ratio(2 * tp, 2 * tp + fp + fn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_f1: float
    precision_pos: float
    recall_pos: float
    confusion: Confusion
    precision_undefined: bool = False

    @classmethod
    def from_confusion(cls, c: Confusion) -> Metrics:
        f1_pos = f1_from_counts(c.tp, c.fp, c.fn)
        f1_neg = f1_from_counts(c.tn, c.fn, c.fp)
        return cls(
            accuracy=_ratio(c.tp + c.tn, c.n),
            macro_f1=(f1_pos + f1_neg) / 2.0,
            precision_pos=_ratio(c.tp, c.tp + c.fp),
            recall_pos=_ratio(c.tp, c.tp + c.fn),
            confusion=c,
            precision_undefined=(c.tp + c.fp) == 0,
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d


def confusion(y_true: Any, y_pred: Any) -> Confusion:
    t = np.asarray(y_true).astype(int)
    p = np.asarray(y_pred).astype(int)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    return Confusion(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
        tn=int(np.sum((t == 0) & (p == 0))),
    )


def compute_metrics(y_true: Any, y_pred: Any) -> Metrics:
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} vs {len(y_pred)}")
    if len(y_true) == 0:
        raise ValueError("no labels")
    return Metrics.from_confusion(confusion(y_true, y_pred))


def macro_f1(y_true: Any, y_pred: Any) -> float:
    return compute_metrics(y_true, y_pred).macro_f1
