"""Experimental protocol: splits, search, metrics, analysis and reports."""

from .analysis import (
    FNAnalysis,
    Importance,
    Projection,
    fn_error_analysis,
    permutation_importance,
    project_2d,
)
from .benchmark import (
    REPORT_FORMAT,
    AccessLog,
    BenchmarkConfig,
    EvalReport,
    LabeledDataset,
    ModelResult,
    format_table,
    run_benchmark,
)
from .metrics import Confusion, Metrics, compute_metrics, confusion, macro_f1
from .schema import REPORT_SCHEMA
from .search import (
    TUNED_THRESHOLD,
    CellResult,
    SearchResult,
    best_threshold,
    default_grids,
    fit_for_regime,
    grid_cells,
    grid_search,
)
from .split import SplitError, SplitSpec, largest_remainder, stratified_split

__all__ = [
    "REPORT_FORMAT",
    "REPORT_SCHEMA",
    "TUNED_THRESHOLD",
    "AccessLog",
    "BenchmarkConfig",
    "CellResult",
    "Confusion",
    "EvalReport",
    "FNAnalysis",
    "Importance",
    "LabeledDataset",
    "Metrics",
    "ModelResult",
    "Projection",
    "SearchResult",
    "SplitError",
    "SplitSpec",
    "best_threshold",
    "compute_metrics",
    "confusion",
    "default_grids",
    "fit_for_regime",
    "fn_error_analysis",
    "format_table",
    "grid_cells",
    "grid_search",
    "largest_remainder",
    "macro_f1",
    "permutation_importance",
    "project_2d",
    "run_benchmark",
    "stratified_split",
]
