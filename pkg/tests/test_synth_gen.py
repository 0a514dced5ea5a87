from __future__ import annotations

import json
from collections import Counter
from dataclasses import replace

import pytest

from agentrace.labeler import detect_cycle, detect_error, has_repeated_node, label_corpus
from agentrace.synth_gen import (
    PAPER_TARGETS,
    ConfigError,
    FailureRates,
    GenerationConfig,
    LogNormal,
    builtin_scenarios,
    default_paper_profile,
    expected_counts,
    generate,
    get_scenario,
)
from agentrace.trace_model import SpanKind, Status, agent_tool_path, extract_trajectory, serialize_traces


def _tiny(rates: FailureRates, seed: int = 0, **kw) -> GenerationConfig:
    cfg = default_paper_profile("stock_market", seed=seed)
    return replace(cfg, num_prompts=12, failure_rates={}, default_failure_rates=rates, **kw)


def test_builtin_scenario_sizes():
    specs = {s.name: s for s in builtin_scenarios()}
    stock = specs["stock_market"]
    assert len(stock.agents) == 3 and len(stock.tools) == 9
    assert {a for a, _ in stock.agents} == {"orchestrator", "stock_market", "search_agent"}
    named = {"stock_quote", "stock_recommendation", "company_transactions", "search_symbol",
             "timeseries_daily_info", "search_internet"}
    assert named <= {t for t, _ in stock.tools}
    research = specs["research_writing"]
    assert len(research.agents) == 9 and len(research.tools) == 6


def test_expected_trajectories_are_cycle_free():
    for spec in builtin_scenarios():
        spec.validate()
        for tpl in spec.prompt_templates:
            for path in tpl.expected:
                assert not has_repeated_node(path)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        get_scenario("nope")
    with pytest.raises(ConfigError):
        default_paper_profile("nope")


def test_paper_profile_sizes():
    assert default_paper_profile("stock_market").num_traces() == 4275
    assert default_paper_profile("research_writing").num_traces() == 894


@pytest.mark.parametrize("name", sorted(PAPER_TARGETS))
def test_profile_expected_counts_hit_targets(name):
    target = PAPER_TARGETS[name]
    exp = expected_counts(default_paper_profile(name))
    assert exp["anomaly"] == pytest.approx(target["anomalies"], abs=1e-6)
    for mode in ("cycle", "error", "drift"):
        assert exp[mode] == pytest.approx(target[mode], rel=1e-9)


def test_zero_rates_produce_expected_paths():
    corpus = generate(_tiny(FailureRates()))
    for t in corpus.traces:
        path = agent_tool_path(extract_trajectory(t))
        assert path in corpus.ground_truth[t.input_prompt_id]
        assert all(s.status is Status.OK for s in t.spans)
        flags = corpus.injected[t.trace_id]
        assert not (flags["cycle"] or flags["error"] or flags["drift"])


def test_certain_cycle_repeats_a_node():
    corpus = generate(_tiny(FailureRates(p_cycle=1.0)))
    assert all(detect_cycle(t) for t in corpus.traces)


def test_certain_error_marks_a_span():
    corpus = generate(_tiny(FailureRates(p_error=1.0)))
    assert all(detect_error(t) for t in corpus.traces)
    assert all(r.error and r.is_anomaly for r in label_corpus(corpus.traces, corpus.ground_truth))


def test_certain_drift_leaves_ground_truth():
    corpus = generate(_tiny(FailureRates(p_drift=1.0)))
    for t in corpus.traces:
        assert agent_tool_path(extract_trajectory(t)) not in corpus.ground_truth[t.input_prompt_id]


def test_one_llm_child_per_agent_in_normal_traces():
    corpus = generate(_tiny(FailureRates()))
    for t in corpus.traces:
        kids = t.children()
        for s in t.spans:
            if s.kind is SpanKind.AGENT:
                assert sum(c.kind is SpanKind.LLM for c in kids.get(s.span_id, ())) == 1


def test_generation_is_deterministic(small_config):
    a, b = generate(small_config), generate(small_config)
    assert serialize_traces(a.traces) == serialize_traces(b.traces)
    assert a.injected_json() == b.injected_json()
    assert a.ground_truth_json() == b.ground_truth_json()
    c = generate(small_config.with_seed(small_config.seed + 1))
    assert serialize_traces(c.traces) != serialize_traces(a.traces)


def test_traces_sorted_and_ids_unique(small_corpus):
    ids = [t.trace_id for t in small_corpus.traces]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)


def test_config_json_round_trip(small_config):
    d = json.loads(json.dumps(small_config.to_dict()))
    back = GenerationConfig.from_dict(d)
    assert back.to_dict() == small_config.to_dict()
    assert serialize_traces(generate(back).traces) == serialize_traces(generate(small_config).traces)


@pytest.mark.parametrize(
    "change",
    [
        {"num_prompts": 0},
        {"model_ids": ()},
        {"default_failure_rates": FailureRates(p_cycle=1.5)},
        {"latency_distributions": {"AGENT": LogNormal(1, 0), "TOOL": LogNormal(1, 1), "LLM": LogNormal(1, 1)}},
        {"extra_failure_rates": {"meteor": 0.1}},
    ],
)
def test_invalid_configs_rejected(change):
    cfg = replace(default_paper_profile("stock_market"), **change)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_extra_failure_kinds_do_not_change_labels():
    cfg = _tiny(FailureRates(), extra_failure_rates={"tool_failure": 1.0, "context_propagation": 1.0})
    corpus = generate(cfg)
    assert not any(r.is_anomaly for r in label_corpus(corpus.traces, corpus.ground_truth))


def test_research_profile_truncates_second_repetition():
    cfg = default_paper_profile("research_writing", seed=0)
    corpus = generate(replace(cfg, num_prompts=3, max_traces=22))
    reps = Counter(t.trace_id.rsplit(".", 1)[1] for t in corpus.traces)
    assert reps == {"r0": 12, "r1": 10}


def test_stock_profile_realized_calibration():
    from conftest import paper_corpus

    corpus = paper_corpus("stock_market", 1)
    target = PAPER_TARGETS["stock_market"]
    assert len(corpus.traces) == target["traces"]
    anomalies = sum(any(f[m] for m in ("cycle", "error", "drift")) for f in corpus.injected.values())
    assert abs(anomalies / target["traces"] - target["anomalies"] / target["traces"]) <= 0.03
    for mode in ("cycle", "error", "drift"):
        realized = sum(f[mode] for f in corpus.injected.values())
        assert abs(realized - target[mode]) <= 0.10 * target[mode]
