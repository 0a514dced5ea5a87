"""Sixteen-dimensional feature vectors from traces."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .trace_model import (
    COMPLETION_TOKENS,
    PROMPT,
    PROMPT_TOKENS,
    SpanKind,
    Trace,
    extract_trajectory,
    span_depths,
    token_count,
)

FEATURE_NAMES = (
    # token
    "prompt_tokens_sum",
    "completion_tokens_sum",
    "tokens_mean",
    "tokens_std",
    # latency
    "latency_sum",
    "latency_mean",
    "total_duration",
    # path
    "total_steps",
    "unique_steps",
    "agent_count",
    "tool_count",
    "max_depth",
    # prompt
    "system_prompt_length",
    "avg_prompt_similarity",
    "std_prompt_similarity",
    # model
    "model_index",
)
N_FEATURES = len(FEATURE_NAMES)
PATH_FEATURES = ("total_steps", "unique_steps", "agent_count", "tool_count", "max_depth")


class FeatureError(ValueError):
    pass


def jaccard(a: str, b: str) -> float:
    """Jaccard similarity of lowercased whitespace token sets; two empty texts give 1."""
    sa, sb = set(a.lower().split()), set(b.lower().split())
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def _pstd(values: Sequence[float]) -> float:
    if len(values) <= 1:
        return 0.0
    arr = np.asarray(values, dtype=float)
    if np.all(arr == arr[0]):
        return 0.0
    return float(np.std(arr))


def extract_features(trace: Trace, model_vocab: Sequence[str]) -> np.ndarray:
    """Feature vector for one trace, ordered as :data:`FEATURE_NAMES`."""
    kids = trace.children()
    # LLM calls in trajectory order, for the consecutive-prompt similarity.
    order: list = []
    stack = [trace.root_span]
    while stack:
        s = stack.pop()
        order.append(s)
        stack.extend(reversed(kids.get(s.span_id, ())))
    llm = [s for s in order if s.kind is SpanKind.LLM]

    try:
        prompt_tok = [token_count(s, PROMPT_TOKENS) for s in llm]
        completion_tok = [token_count(s, COMPLETION_TOKENS) for s in llm]
    except ValueError as exc:
        raise FeatureError(f"trace {trace.trace_id!r}: {exc}") from None
    per_call = [p + c for p, c in zip(prompt_tok, completion_tok)]

    durations = [s.duration_ms for s in trace.spans]
    traj = extract_trajectory(trace)
    depths = span_depths(trace)

    sims = [
        jaccard(str(a.attributes.get(PROMPT, "")), str(b.attributes.get(PROMPT, "")))
        for a, b in zip(llm, llm[1:])
    ]
    system_prompt = trace.root_span.attributes.get(PROMPT, "")

    if trace.model_id is not None and trace.model_id in model_vocab:
        model_index = list(model_vocab).index(trace.model_id)
    else:
        model_index = -1

    vec = [
        float(sum(prompt_tok)),
        float(sum(completion_tok)),
        float(np.mean(per_call)) if per_call else 0.0,
        _pstd(per_call),
        math.fsum(durations),
        math.fsum(durations) / len(durations),
        trace.root_span.duration_ms,
        float(len(traj)),
        float(len(set(traj.steps))),
        float(sum(s.kind is SpanKind.AGENT for s in trace.spans)),
        float(sum(s.kind is SpanKind.TOOL for s in trace.spans)),
        float(max(depths.values())),
        float(len(str(system_prompt))),
        float(np.mean(sims)) if sims else 0.0,
        _pstd(sims),
        float(model_index),
    ]
    return np.array(vec, dtype=float)


def build_model_vocab(traces: Sequence[Trace]) -> list[str]:
    return sorted({t.model_id for t in traces if t.model_id is not None})


def extract_dataset(
    traces: Sequence[Trace], model_vocab: Sequence[str]
) -> tuple[np.ndarray, list[str]]:
    """Stack feature vectors; row ``i`` belongs to ``traces[i]``."""
    if not traces:
        raise FeatureError("no traces to featurize")
    rows = []
    for t in traces:
        try:
            rows.append(extract_features(t, model_vocab))
        except FeatureError:
            raise
        except ValueError as exc:
            raise FeatureError(f"trace {t.trace_id!r}: {exc}") from None
    return np.vstack(rows), [t.trace_id for t in traces]


def format_float(v: float) -> str:
    return format(float(v), ".9g")


def features_to_csv(X: np.ndarray, trace_ids: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("trace_id", *FEATURE_NAMES))
    for tid, row in zip(trace_ids, X):
        w.writerow([tid, *(format_float(v) for v in row)])
    return buf.getvalue()


def read_features_csv(path: str | Path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ("trace_id", *FEATURE_NAMES):
            raise FeatureError(f"{path}: unexpected feature header")
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return np.array(rows, dtype=float).reshape(len(rows), N_FEATURES), ids
