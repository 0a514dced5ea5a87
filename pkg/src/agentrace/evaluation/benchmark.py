"""End-to-end benchmark: split, search, refit, test, analyse."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ..detectors import ONE_CLASS, SUPERVISED, DetectorKind, DetectorModel, regime
from ..features import FEATURE_NAMES
from .analysis import FNAnalysis, Importance, fn_error_analysis, permutation_importance
from .metrics import Metrics, compute_metrics
from .search import SearchResult, default_grids, grid_search
from .split import SplitSpec, stratified_split

REPORT_FORMAT = "agentrace-report/1"


class AccessLog:
    """Counts row reads per stage; used to prove split hygiene."""

    def __init__(self) -> None:
        self.counts: dict[str, Counter] = {}

    def record(self, stage: str, idx: np.ndarray) -> None:
        self.counts.setdefault(stage, Counter()).update(int(i) for i in idx)

    def rows(self, stage: str) -> set[int]:
        return set(self.counts.get(stage, ()))


@dataclass
class LabeledDataset:
    """Feature matrix with labels, trace ids and optional (n, 3) mode flags.

    Benchmark code reads rows only through :meth:`take`, so an attached
    :class:`AccessLog` sees every row each stage touches.
    """

    X: np.ndarray
    y: np.ndarray
    trace_ids: list[str]
    modes: np.ndarray | None = None
    log: AccessLog | None = None

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y).astype(int)
        if self.X.ndim != 2 or len(self.X) != len(self.y) or len(self.y) != len(self.trace_ids):
            raise ValueError("X, y and trace_ids must have matching rows")
        if self.modes is not None:
            self.modes = np.asarray(self.modes).astype(int).reshape(-1, 3)
            if len(self.modes) != len(self.y):
                raise ValueError("modes must have one row per trace")

    def __len__(self) -> int:
        return len(self.y)

    def labels(self) -> np.ndarray:
        """Labels only, for stratification; no feature rows are read."""
        return self.y.copy()

    def take(self, idx: np.ndarray, stage: str) -> tuple[np.ndarray, np.ndarray]:
        if self.log is not None:
            self.log.record(stage, idx)
        return self.X[idx], self.y[idx]


@dataclass
class BenchmarkConfig:
    models: list[DetectorKind] = field(default_factory=lambda: list(DetectorKind))
    grids: dict[DetectorKind, dict[str, list[Any]]] | None = None
    split: SplitSpec = field(default_factory=SplitSpec)
    importance_repeats: int = 10
    seed: int = 0

    def resolved_grids(self) -> dict[DetectorKind, dict[str, list[Any]]]:
        base = default_grids(self.seed)
        if self.grids:
            base.update({DetectorKind(k): v for k, v in self.grids.items()})
        return {k: base[k] for k in self.models}

    def to_dict(self) -> dict[str, Any]:
        return {
            "models": [k.value for k in self.models],
            "grids": {k.value: g for k, g in self.resolved_grids().items()},
            "split": self.split.to_dict(),
            "importance_repeats": self.importance_repeats,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BenchmarkConfig:
        seed = int(d.get("seed", 0))
        split = d.get("split", {})
        return cls(
            models=[DetectorKind(m) for m in d.get("models", [k.value for k in DetectorKind])],
            grids={DetectorKind(k): dict(v) for k, v in (d.get("grids") or {}).items()} or None,
            split=SplitSpec(tuple(split.get("fractions", (0.70, 0.15, 0.15))), int(split.get("seed", seed))),
            importance_repeats=int(d.get("importance_repeats", 10)),
            seed=seed,
        )


@dataclass
class ModelResult:
    kind: DetectorKind
    params: dict[str, Any] | None
    threshold: float | None
    val_macro_f1: float | None
    test: Metrics | None
    search: SearchResult
    converged: bool | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.test is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "regime": regime(self.kind),
            "params": self.params,
            "threshold": self.threshold,
            "val_macro_f1": self.val_macro_f1,
            "test": None if self.test is None else self.test.to_dict(),
            "converged": self.converged,
            "error": self.error,
            "grid": [c.to_dict() for c in self.search.cells],
            "warnings": self.search.warnings,
        }


@dataclass
class EvalReport:
    config: dict[str, Any]
    split_sizes: dict[str, dict[str, int]]
    results: list[ModelResult]
    importance: dict[str, list[Importance]]
    fn_analysis: dict[str, FNAnalysis]
    test_trace_ids: list[str]
    complete: bool
    models: dict[DetectorKind, DetectorModel] = field(default_factory=dict, repr=False)

    def result(self, kind: DetectorKind) -> ModelResult:
        for r in self.results:
            if r.kind is DetectorKind(kind):
                return r
        raise KeyError(kind)

    def best_of(self, kinds: Sequence[DetectorKind]) -> ModelResult | None:
        """Highest validation macro-F1 among ``kinds``; earlier kinds win ties."""
        best = None
        for r in self.results:
            if r.kind in kinds and r.ok and (best is None or r.val_macro_f1 > best.val_macro_f1):
                best = r
        return best

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": REPORT_FORMAT,
            "complete": self.complete,
            "config": self.config,
            "seeds": {"benchmark": self.config["seed"], "split": self.config["split"]["seed"]},
            "features": list(FEATURE_NAMES),
            "split_sizes": self.split_sizes,
            "models": [r.to_dict() for r in self.results],
            "importance": {k: [i.to_dict() for i in v] for k, v in self.importance.items()},
            "fn_analysis": {k: v.to_dict() for k, v in self.fn_analysis.items()},
            "test_trace_ids": self.test_trace_ids,
        }


def _sizes(y: np.ndarray) -> dict[str, int]:
    return {"total": int(len(y)), "anomaly": int(y.sum()), "normal": int(len(y) - y.sum())}


def run_benchmark(data: LabeledDataset, config: BenchmarkConfig = BenchmarkConfig()) -> EvalReport:
    """Split, grid-search every configured model on validation, score the
    winner on test, then run importance (validation rows) and FN analysis
    (test rows) for the best supervised and best one-class model.

    The grid-search winner is already fitted on the training rows with its
    regime's data rule, so it serves as the refit model.
    """
    tr, va, te = stratified_split(data.labels(), config.split)
    Xtr, ytr = data.take(tr, "search")
    Xva, yva = data.take(va, "search")
    results: list[ModelResult] = []
    fitted: dict[DetectorKind, DetectorModel] = {}
    for kind, grid in config.resolved_grids().items():
        search = grid_search(kind, grid, (Xtr, ytr), (Xva, yva))
        if not search.ok:
            errs = "; ".join(c.error for c in search.cells if c.error)
            results.append(ModelResult(kind, None, None, None, None, search, error=f"all cells failed: {errs}"))
            continue
        model = search.best_model
        Xte, yte = data.take(te, "test")
        test = compute_metrics(yte, model.predict(Xte)[0])
        conv = getattr(model, "converged", None)
        results.append(ModelResult(
            kind, search.best_params, model.decision_threshold, search.best_score, test, search,
            converged=None if conv is None else bool(conv),
        ))
        fitted[kind] = model

    report = EvalReport(
        config=config.to_dict(),
        split_sizes={"train": _sizes(ytr), "val": _sizes(yva), "test": _sizes(data.y[te])},
        results=results,
        importance={},
        fn_analysis={},
        test_trace_ids=[data.trace_ids[i] for i in te],
        complete=all(r.ok for r in results),
        models=fitted,
    )
    for group in (SUPERVISED, ONE_CLASS):
        best = report.best_of(group)
        if best is None:
            continue
        model = fitted[best.kind]
        Xv, yv = data.take(va, "importance")
        report.importance[best.kind.value] = permutation_importance(
            model, Xv, yv, repeats=config.importance_repeats, seed=config.seed
        )
        if data.modes is not None:
            Xt, yt = data.take(te, "analysis")
            report.fn_analysis[best.kind.value] = fn_error_analysis(
                yt, model.predict(Xt)[0], Xt, data.modes[te], [data.trace_ids[i] for i in te]
            )
    return report


_REGIME_TITLE = {"supervised": "Supervised", "one_class": "One-class", "unsupervised": "Unsupervised"}


def format_table(report: EvalReport) -> str:
    """Plain-text comparison table; * marks anomaly-class metrics."""
    head = f"{'Method Type':<13} {'Model':<17} {'Accuracy':>8} {'Macro-F1':>8} {'Precision*':>10} {'Recall*':>8}"
    lines = [head, "-" * len(head)]
    for r in report.results:
        title = _REGIME_TITLE[regime(r.kind)]
        if r.test is None:
            lines.append(f"{title:<13} {r.kind.value:<17} {'failed':>8}")
            continue
        m = r.test
        lines.append(
            f"{title:<13} {r.kind.value:<17} {m.accuracy:>8.4f} {m.macro_f1:>8.4f} "
            f"{m.precision_pos:>10.4f} {m.recall_pos:>8.4f}"
        )
    return "\n".join(lines)
