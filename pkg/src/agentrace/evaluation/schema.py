"""JSON Schema for serialized benchmark reports."""

from __future__ import annotations

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_COUNT = {"type": "integer", "minimum": 0}

_METRICS = {
    "type": "object",
    "required": ["accuracy", "macro_f1", "precision_pos", "recall_pos", "confusion", "precision_undefined"],
    "properties": {
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "macro_f1": {"type": "number", "minimum": 0, "maximum": 1},
        "precision_pos": {"type": "number", "minimum": 0, "maximum": 1},
        "recall_pos": {"type": "number", "minimum": 0, "maximum": 1},
        "precision_undefined": {"type": "boolean"},
        "confusion": {
            "type": "object",
            "required": ["tp", "fp", "fn", "tn"],
            "properties": {k: _COUNT for k in ("tp", "fp", "fn", "tn")},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_KINDS = ["GBT", "RANDOM_FOREST", "LOGISTIC", "SVM", "NAIVE_BAYES", "SVDD", "ISOLATION_FOREST", "KMEANS"]

_MODEL = {
    "type": "object",
    "required": ["kind", "regime", "params", "threshold", "val_macro_f1", "test", "converged", "error", "grid"],
    "properties": {
        "kind": {"enum": _KINDS},
        "regime": {"enum": ["supervised", "one_class", "unsupervised"]},
        "params": {"type": ["object", "null"]},
        "threshold": _NUM_OR_NULL,
        "val_macro_f1": _NUM_OR_NULL,
        "test": {"oneOf": [_METRICS, {"type": "null"}]},
        "converged": {"type": ["boolean", "null"]},
        "error": {"type": ["string", "null"]},
        "grid": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["params", "score", "threshold", "error"],
                "properties": {
                    "params": {"type": "object"},
                    "score": _NUM_OR_NULL,
                    "threshold": _NUM_OR_NULL,
                    "error": {"type": ["string", "null"]},
                },
            },
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}

_SIZES = {
    "type": "object",
    "required": ["total", "anomaly", "normal"],
    "properties": {k: _COUNT for k in ("total", "anomaly", "normal")},
}

_IMPORTANCE = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["feature", "mean", "std"],
        "properties": {"feature": {"type": "string"}, "mean": _NUM, "std": _NUM},
    },
}

_FN = {
    "type": "object",
    "required": [
        "n_anomalies", "n_tp", "n_fn", "mean_diff", "mode_counts", "drift_only_fn",
        "drift_only_anomalies", "drift_only_fn_negative_path", "rows",
    ],
    "properties": {
        "n_anomalies": _COUNT,
        "n_tp": _COUNT,
        "n_fn": _COUNT,
        "mean_diff": {"type": "object", "additionalProperties": _NUM},
        "mode_counts": {"type": "object", "additionalProperties": _COUNT},
        "drift_only_fn": _COUNT,
        "drift_only_anomalies": _COUNT,
        "drift_only_fn_negative_path": _COUNT,
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["trace_id", "cycle", "error", "drift", "features", "diff"],
            },
        },
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "agentrace benchmark report",
    "type": "object",
    "required": [
        "format", "complete", "config", "seeds", "features", "split_sizes", "models",
        "importance", "fn_analysis", "test_trace_ids",
    ],
    "properties": {
        "format": {"const": "agentrace-report/1"},
        "complete": {"type": "boolean"},
        "config": {"type": "object", "required": ["models", "grids", "split", "seed"]},
        "provenance": {"type": "object"},
        "seeds": {
            "type": "object",
            "required": ["benchmark", "split"],
            "properties": {"benchmark": {"type": "integer"}, "split": {"type": "integer"}},
        },
        "features": {"type": "array", "items": {"type": "string"}, "minItems": 16, "maxItems": 16},
        "split_sizes": {
            "type": "object",
            "required": ["train", "val", "test"],
            "properties": {k: _SIZES for k in ("train", "val", "test")},
        },
        "models": {"type": "array", "items": _MODEL},
        "importance": {"type": "object", "additionalProperties": _IMPORTANCE},
        "fn_analysis": {"type": "object", "additionalProperties": _FN},
        "test_trace_ids": {"type": "array", "items": {"type": "string"}},
    },
}
