from __future__ import annotations

from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from agentrace.evaluation import BenchmarkConfig, LabeledDataset, SplitSpec, run_benchmark
from agentrace.features import build_model_vocab, extract_dataset
from agentrace.labeler import label_corpus
from agentrace.synth_gen import FailureRates, default_paper_profile, generate
from agentrace.trace_model import (
    COMPLETION_TOKENS,
    INPUT_PROMPT_ID,
    PROMPT,
    PROMPT_TOKENS,
    REQUEST_MODEL,
    SYSTEM_PROMPT_TYPE,
    Span,
    SpanKind,
    Status,
    build_trace,
)

MS = 1_000_000

# Acceptance verdict lines, keyed by criterion number; printed after the run.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])


def span(sid, parent, kind, name, start, end, status=Status.OK, trace_id="t1", **attrs):
    """Span with times in ms; LLM spans get token/model attributes unless given."""
    kind = SpanKind(kind)
    a = dict(attrs.pop("attributes", {}))
    if kind is SpanKind.LLM:
        a.setdefault(PROMPT_TOKENS, 1)
        a.setdefault(COMPLETION_TOKENS, 1)
        a.setdefault(REQUEST_MODEL, "m")
    if parent is None:
        a.setdefault(INPUT_PROMPT_ID, "p0")
        a.setdefault(SYSTEM_PROMPT_TYPE, "GOOD")
        a.setdefault(REQUEST_MODEL, "m")
    return Span(trace_id, sid, parent, name, kind, start * MS, end * MS, Status(status), a)


def chain_trace(steps, trace_id="t1", prompt_id="p0", statuses=None):
    """Flat trace: AGENT root followed by the given (kind, name) steps as its children."""
    statuses = statuses or {}
    spans = [span("00", None, "AGENT", "orchestrator", 0, 1000, trace_id=trace_id,
                  attributes={INPUT_PROMPT_ID: prompt_id, SYSTEM_PROMPT_TYPE: "GOOD", REQUEST_MODEL: "m",
                              PROMPT: "sys"})]
    for i, (kind, name) in enumerate(steps, 1):
        spans.append(span(f"{i:02d}", "00", kind, name, i * 10, i * 10 + 5,
                          status=statuses.get(i, Status.OK), trace_id=trace_id))
    return build_trace(spans)


@lru_cache(maxsize=None)
def paper_corpus(name: str, seed: int):
    return generate(default_paper_profile(name, seed=seed))


@lru_cache(maxsize=None)
def paper_dataset(name: str, seed: int) -> LabeledDataset:
    corpus = paper_corpus(name, seed)
    records = label_corpus(corpus.traces, corpus.ground_truth)
    X, ids = extract_dataset(corpus.traces, build_model_vocab(corpus.traces))
    y = np.array([r.is_anomaly for r in records], dtype=int)
    modes = np.array([[r.cycle, r.error, r.drift] for r in records], dtype=int)
    return LabeledDataset(X, y, ids, modes)


@lru_cache(maxsize=None)
def paper_report(name: str, seed: int):
    return run_benchmark(paper_dataset(name, seed), BenchmarkConfig(seed=seed, split=SplitSpec(seed=seed)))


@pytest.fixture(scope="session")
def small_config():
    """Stock scenario trimmed to 180 traces with moderate failure rates."""
    cfg = default_paper_profile("stock_market", seed=11)
    return replace(cfg, num_prompts=20, failure_rates={}, default_failure_rates=FailureRates(0.2, 0.2, 0.3))


@pytest.fixture(scope="session")
def small_corpus(small_config):
    return generate(small_config)
