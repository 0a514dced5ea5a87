from __future__ import annotations

import random
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentrace.labeler import (
    GroundTruthRegistry,
    Label,
    LabelingError,
    LabelRecord,
    cohens_kappa,
    detect_cycle,
    detect_drift,
    detect_error,
    label_corpus,
    labels_to_csv,
    read_labels_csv,
)
from agentrace.synth_gen import FailureRates, default_paper_profile, generate
from agentrace.trace_model import SpanKind, Status, Trajectory, agent_tool_path, extract_trajectory

from conftest import chain_trace

A, T, L = SpanKind.AGENT, SpanKind.TOOL, SpanKind.LLM


def _registry(*paths, prompt_id="p0"):
    return GroundTruthRegistry({prompt_id: [Trajectory(tuple(p)) for p in paths]})


def test_cycle_rule_examples():
    assert detect_cycle(chain_trace([("TOOL", "a"), ("TOOL", "a")]))
    assert not detect_cycle(chain_trace([("LLM", "m")] * 5 + [("TOOL", "a"), ("AGENT", "b")]))


def test_error_rule_examples():
    assert not detect_error(chain_trace([("TOOL", "a"), ("TOOL", "b")]))
    assert detect_error(chain_trace([("TOOL", "a"), ("TOOL", "b")], statuses={2: Status.ERROR}))


def test_drift_rule_examples():
    reg = _registry([(A, "orchestrator"), (T, "a")])
    assert not detect_drift(chain_trace([("LLM", "m"), ("TOOL", "a")]), reg)
    assert detect_drift(chain_trace([("TOOL", "b")]), reg)


def test_drift_needs_exact_sequence():
    reg = _registry([(A, "orchestrator"), (T, "a"), (T, "b")])
    assert detect_drift(chain_trace([("TOOL", "b"), ("TOOL", "a")]), reg)
    assert detect_drift(chain_trace([("TOOL", "a")]), reg)


def test_unknown_prompt_is_an_error():
    reg = _registry([(A, "orchestrator")])
    bad = [chain_trace([], trace_id="x", prompt_id="zz"), chain_trace([], trace_id="y", prompt_id="qq")]
    with pytest.raises(LabelingError) as exc:
        label_corpus(bad + [chain_trace([], trace_id="z")], reg)
    assert exc.value.trace_ids == ["x", "y"]
    with pytest.raises(LabelingError):
        detect_drift(bad[0], reg)


def test_registry_rejects_empty_and_cyclic_paths():
    with pytest.raises(ValueError):
        _registry([])
    with pytest.raises(ValueError):
        _registry([(A, "o"), (T, "a"), (T, "a")])


def test_registry_json_round_trip():
    reg = _registry([(A, "o"), (T, "a")], [(A, "o"), (T, "b")])
    back = GroundTruthRegistry.from_dict(reg.to_dict())
    assert back["p0"] == reg["p0"]


def test_label_invariant():
    for flags in [(False, False, False), (True, False, False), (False, True, False), (False, False, True)]:
        r = LabelRecord("t", *flags)
        assert (r.label is Label.ANOMALY) == any(flags)


def test_extensibility_never_flips_normal_to_anomaly(small_corpus):
    records = label_corpus(small_corpus.traces, small_corpus.ground_truth)
    reg = GroundTruthRegistry.from_dict(small_corpus.ground_truth.to_dict())
    rng = random.Random(0)
    for pid in reg.prompt_ids():
        reg.register(pid, Trajectory(((A, "orchestrator"), (T, f"extra{rng.randrange(100)}"))))
    after = label_corpus(small_corpus.traces, reg)
    for before, now in zip(records, after):
        if before.label is Label.NORMAL:
            assert now.label is Label.NORMAL
        assert now.drift <= before.drift


def test_labels_csv_round_trip(small_corpus, tmp_path):
    records = label_corpus(small_corpus.traces, small_corpus.ground_truth)
    text = labels_to_csv(records)
    assert text.splitlines()[0] == "trace_id,cycle,error,drift,label"
    path = tmp_path / "labels.csv"
    path.write_bytes(text.encode())
    assert read_labels_csv(path) == records


def _sidecar_check(corpus):
    records = label_corpus(corpus.traces, corpus.ground_truth)
    assert [r.trace_id for r in records] == [t.trace_id for t in corpus.traces]
    for t, r in zip(corpus.traces, records):
        inj = corpus.injected[t.trace_id]
        path = agent_tool_path(extract_trajectory(t))
        brute = any(c >= 2 for c in Counter(path.steps).values())
        assert r.cycle == brute == inj["cycle"]
        assert r.error == inj["error"]
        assert r.drift == (inj["drift"] or inj["cycle"])
        assert r.is_anomaly == (detect_cycle(t) or detect_error(t) or detect_drift(t, corpus.ground_truth))


@pytest.mark.parametrize("name", ["stock_market", "research_writing"])
def test_labels_agree_with_generator_sidecar(name):
    cfg = default_paper_profile(name, seed=5)
    cfg = replace(cfg, failure_rates={}, default_failure_rates=FailureRates(0.3, 0.3, 0.3), max_traces=500)
    _sidecar_check(generate(cfg))


def test_zero_failure_corpus_is_all_normal():
    cfg = replace(default_paper_profile("research_writing", seed=2), failure_rates={},
                  default_failure_rates=FailureRates(), max_traces=200)
    corpus = generate(cfg)
    assert all(r.label is Label.NORMAL for r in label_corpus(corpus.traces, corpus.ground_truth))


def test_kappa_worked_table():
    # rows: annotator a, columns: annotator b; [[20, 5], [10, 15]]
    a = [1] * 25 + [0] * 25
    b = [1] * 20 + [0] * 5 + [1] * 10 + [0] * 15
    assert cohens_kappa(a, b) == pytest.approx(0.4, abs=1e-12)


def test_kappa_closed_forms():
    a = [0, 1] * 10
    assert cohens_kappa(a, a) == 1.0
    assert cohens_kappa(a, [1 - v for v in a]) == pytest.approx(-1.0, abs=1e-12)
    assert cohens_kappa([1, 1, 1], [1, 1, 1]) == 1.0
    with pytest.raises(ValueError):
        cohens_kappa([1, 0], [1])


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
def test_kappa_symmetric_and_bounded(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    k = cohens_kappa(a, b)
    assert k == pytest.approx(cohens_kappa(b, a), abs=1e-12)
    assert -1.0 - 1e-12 <= k <= 1.0 + 1e-12
