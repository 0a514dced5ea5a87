"""Synthetic multi-agent trace corpora with injected silent failures.

Every (prompt, system-prompt type, model, repetition) combination yields one
trace. A normal trace realizes one of the prompt's expected agent/tool paths,
with one LLM call under every agent span. Cycle, error and drift failures are
drawn independently per trace; the generator records which ones it injected
so the labeler can be checked against it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .labeler import GroundTruthRegistry, has_repeated_node
from .trace_model import (
    COMPLETION,
    COMPLETION_TOKENS,
    INPUT_PROMPT_ID,
    PROMPT,
    PROMPT_TOKENS,
    REQUEST_MODEL,
    SYSTEM_PROMPT_TYPE,
    Span,
    SpanKind,
    Status,
    SystemPromptType,
    Trace,
    Trajectory,
    build_trace,
)

Step = tuple[SpanKind, str]

FAILURE_MODES = ("cycle", "error", "drift")
EXTRA_FAILURE_KINDS = ("tool_failure", "context_propagation")

EPOCH_NS = 1_767_225_600_000_000_000  # 2026-01-01T00:00:00Z

# Words a tool result may contain; each completed tool appends a few of these
# to the LLM context, so repeated calls still bring in fresh tokens.
OBSERVATION_WORDS = tuple(
    """price rose fell volume index quarter revenue margin growth forecast analyst rating
    source article summary table chart figure paragraph section draft citation author date
    result found missing partial complete value ratio trend peak low high average median
    report filing earnings guidance risk sector market share dividend yield signal note
    page link snippet query record entry status update metric score estimate range""".split()
)
OBSERVATION_SIZE = 4

SYSTEM_PROMPTS = {
    SystemPromptType.POOR: "You are an assistant. Answer the question.",
    SystemPromptType.GOOD: (
        "You are a careful assistant that solves tasks step by step. "
        "Thought: reason about what to do next. Action: call exactly one tool or agent. "
        "Observation: read the result. Repeat until you can give the final answer."
    ),
    SystemPromptType.STRICT: (
        "You are a careful assistant that solves tasks step by step. "
        "Thought: reason about what to do next. Action: call exactly one tool or agent. "
        "Observation: read the result. Repeat until you can give the final answer. "
        "Rules: never call the same tool twice; only delegate to agents listed below; "
        "stop as soon as the question is answered; report tool errors verbatim. "
        "Example: Question: price of ACME? Thought: I need a quote. Action: stock_quote(ACME). "
        "Observation: 12.30 USD. Final answer: ACME trades at 12.30 USD."
    ),
}


class ConfigError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str
    expected: tuple[Trajectory, ...]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    agents: tuple[tuple[str, str | None], ...]
    tools: tuple[tuple[str, str], ...]
    prompt_templates: tuple[PromptTemplate, ...]
    subjects: tuple[str, ...] = ("the topic",)

    @property
    def root_agent(self) -> str:
        return next(name for name, parent in self.agents if parent is None)

    @property
    def agent_parent(self) -> dict[str, str | None]:
        return dict(self.agents)

    def nodes(self) -> list[Step]:
        return [(SpanKind.AGENT, a) for a, _ in self.agents] + [
            (SpanKind.TOOL, t) for t, _ in self.tools
        ]

    def validate(self) -> None:
        names = [a for a, _ in self.agents]
        if len(set(names)) != len(names):
            raise ScenarioError(f"{self.name}: duplicate agent names")
        roots = [a for a, p in self.agents if p is None]
        if len(roots) != 1:
            raise ScenarioError(f"{self.name}: need exactly one root agent")
        for a, p in self.agents:
            if p is not None and p not in names:
                raise ScenarioError(f"{self.name}: agent {a!r} has unknown parent {p!r}")
        for t, owner in self.tools:
            if owner not in names:
                raise ScenarioError(f"{self.name}: tool {t!r} owned by unknown agent {owner!r}")
        declared = set(self.nodes())
        if not self.prompt_templates:
            raise ScenarioError(f"{self.name}: no prompt templates")
        for tpl in self.prompt_templates:
            if not tpl.expected:
                raise ScenarioError(f"{self.name}/{tpl.template_id}: no expected trajectory")
            for path in tpl.expected:
                if not path.steps or path.steps[0] != (SpanKind.AGENT, roots[0]):
                    raise ScenarioError(
                        f"{self.name}/{tpl.template_id}: path must start at the root agent"
                    )
                unknown = [s for s in path.steps if s not in declared]
                if unknown:
                    raise ScenarioError(f"{self.name}/{tpl.template_id}: undeclared {unknown}")
                if has_repeated_node(path):
                    raise ScenarioError(f"{self.name}/{tpl.template_id}: path has a cycle")


def _path(*names: str, tools: Iterable[str] = ()) -> Trajectory:
    tool_set = set(tools)
    return Trajectory(
        tuple((SpanKind.TOOL if n in tool_set else SpanKind.AGENT, n) for n in names)
    )


def _stock_market() -> ScenarioSpec:
    agents = (("orchestrator", None), ("stock_market", "orchestrator"), ("search_agent", "orchestrator"))
    tools = (
        ("stock_quote", "stock_market"),
        ("stock_recommendation", "stock_market"),
        ("company_transactions", "stock_market"),
        ("search_symbol", "stock_market"),
        ("timeseries_daily_info", "stock_market"),
        ("company_profile", "stock_market"),
        ("currency_convert", "stock_market"),
        ("search_internet", "search_agent"),
        ("fetch_webpage", "search_agent"),
    )
    tn = [t for t, _ in tools]

    def p(*names: str) -> Trajectory:
        return _path(*names, tools=tn)

    o, sm, sa = "orchestrator", "stock_market", "search_agent"
    templates = (
        PromptTemplate("quote", "What is the current share price of {s}?", (p(o, sm, "stock_quote"),)),
        PromptTemplate(
            "buy",
            "Should I buy {s} right now? Give me the price and the analyst view.",
            (p(o, sm, "stock_quote", "stock_recommendation"), p(o, sm, "stock_recommendation", "stock_quote")),
        ),
        PromptTemplate(
            "insider",
            "Show recent insider transactions for {s}.",
            (p(o, sm, "search_symbol", "company_transactions"),),
        ),
        PromptTemplate(
            "trend",
            "How did {s} trade over the last month?",
            (p(o, sm, "timeseries_daily_info"), p(o, sm, "search_symbol", "timeseries_daily_info")),
        ),
        PromptTemplate("news", "What is the latest news about {s}?", (p(o, sa, "search_internet"),)),
        PromptTemplate(
            "ticker",
            "Find the ticker symbol for {s} and tell me its price.",
            (p(o, sm, "search_symbol", "stock_quote"),),
        ),
        PromptTemplate(
            "news_rec",
            "Summarize the news on {s} and the analyst recommendation.",
            (
                p(o, sa, "search_internet", sm, "stock_recommendation"),
                p(o, sm, "stock_recommendation", sa, "search_internet"),
            ),
        ),
        PromptTemplate("profile", "Give me a company profile of {s}.", (p(o, sm, "company_profile"),)),
        PromptTemplate(
            "fx",
            "What is the price of {s} in euros?",
            (p(o, sm, "stock_quote", "currency_convert"),),
        ),
        PromptTemplate(
            "article",
            "Read the top article about {s} and summarize it.",
            (p(o, sa, "search_internet", "fetch_webpage"),),
        ),
    )
    subjects = (
        "IBM", "Apple", "NVIDIA", "Tesla", "Microsoft", "Amazon", "Alphabet",
        "Meta", "Intel", "Oracle", "Salesforce", "Adobe", "Netflix", "AMD",
        "Qualcomm", "Cisco", "PayPal", "Shopify", "Uber", "Airbnb",
    )
    return ScenarioSpec("stock_market", agents, tools, templates, subjects)


def _research_writing() -> ScenarioSpec:
    o, ro, wo = "orchestrator", "research_orchestrator", "writing_orchestrator"
    agents = (
        (o, None),
        (ro, o),
        (wo, o),
        ("doc_writer", wo),
        ("note_taker", ro),
        ("chart_maker", wo),
        ("rag_agent", ro),
        ("web_scraper", ro),
        ("search_internet", ro),
    )
    tools = (
        ("write_document", "doc_writer"),
        ("save_note", "note_taker"),
        ("make_chart", "chart_maker"),
        ("vector_search", "rag_agent"),
        ("scrape_url", "web_scraper"),
        ("web_search", "search_internet"),
    )
    tn = [t for t, _ in tools]

    def p(*names: str) -> Trajectory:
        return _path(*names, tools=tn)

    templates = (
        PromptTemplate(
            "brief",
            "Write a short brief on {s}.",
            (p(o, ro, "search_internet", "web_search", wo, "doc_writer", "write_document"),),
        ),
        PromptTemplate(
            "notes",
            "Collect notes about {s} from our document store.",
            (p(o, ro, "rag_agent", "vector_search", "note_taker", "save_note"),),
        ),
        PromptTemplate(
            "chart",
            "Make a chart of recent figures on {s}.",
            (p(o, ro, "search_internet", "web_search", wo, "chart_maker", "make_chart"),),
        ),
        PromptTemplate(
            "scrape",
            "Scrape the main page about {s} and summarize it in a document.",
            (p(o, ro, "web_scraper", "scrape_url", wo, "doc_writer", "write_document"),),
        ),
        PromptTemplate(
            "report",
            "Prepare a report with a chart on {s} using internal sources.",
            (
                p(o, ro, "rag_agent", "vector_search", wo, "chart_maker", "make_chart", "doc_writer", "write_document"),
                p(o, ro, "rag_agent", "vector_search", wo, "doc_writer", "write_document", "chart_maker", "make_chart"),
            ),
        ),
        PromptTemplate(
            "lookup",
            "Look up {s} in our knowledge base.",
            (p(o, ro, "rag_agent", "vector_search"),),
        ),
        PromptTemplate(
            "web_notes",
            "Search the web for {s} and keep notes.",
            (p(o, ro, "search_internet", "web_search", "note_taker", "save_note"),),
        ),
        PromptTemplate(
            "draft",
            "Draft a document on {s}.",
            (p(o, wo, "doc_writer", "write_document"),),
        ),
    )
    subjects = (
        "battery recycling", "quantum error correction", "coral reef decline",
        "urban heat islands", "open source licensing", "vaccine cold chains",
        "carbon capture", "microplastics", "satellite broadband", "soil carbon",
        "federated learning", "desalination", "wildfire forecasting", "gene drives",
    )
    return ScenarioSpec("research_writing", agents, tools, templates, subjects)


def builtin_scenarios() -> list[ScenarioSpec]:
    specs = [_stock_market(), _research_writing()]
    for s in specs:
        s.validate()
    return specs


def get_scenario(name: str) -> ScenarioSpec:
    for s in builtin_scenarios():
        if s.name == name:
            return s
    raise ConfigError(f"unknown scenario {name!r}")


@dataclass(frozen=True)
class FailureRates:
    p_cycle: float = 0.0
    p_error: float = 0.0
    p_drift: float = 0.0

    def validate(self) -> None:
        for k, v in vars(self).items():
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{k} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class LogNormal:
    """Lognormal parameters: mean and sigma of the log value."""

    mu: float
    sigma: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.lognormal(self.mu, self.sigma))


DEFAULT_TOKENS = {
    "prompt": LogNormal(math.log(350.0), 0.35),
    "completion": LogNormal(math.log(120.0), 0.45),
}
DEFAULT_LATENCY_MS = {
    "AGENT": LogNormal(math.log(25.0), 0.3),
    "TOOL": LogNormal(math.log(400.0), 0.45),
    "LLM": LogNormal(math.log(1500.0), 0.35),
}


@dataclass(frozen=True)
class GenerationConfig:
    """Everything :func:`generate` needs; the output is a pure function of it.

    ``failure_rates`` is keyed by ``(system_prompt_type, model_id)``; cells that
    are absent fall back to ``default_failure_rates``. ``max_traces`` truncates
    the canonical enumeration (repetition-major), dropping the last combinations
    of the final repetition.
    """

    scenario: ScenarioSpec
    num_prompts: int
    system_prompt_types: tuple[SystemPromptType, ...]
    model_ids: tuple[str, ...]
    failure_rates: Mapping[tuple[SystemPromptType, str], FailureRates] = field(default_factory=dict)
    default_failure_rates: FailureRates = FailureRates()
    token_distributions: Mapping[str, LogNormal] = field(default_factory=lambda: dict(DEFAULT_TOKENS))
    latency_distributions: Mapping[str, LogNormal] = field(
        default_factory=lambda: dict(DEFAULT_LATENCY_MS)
    )
    seed: int = 0
    repetitions: int = 1
    max_traces: int | None = None
    subtle_drift: float = 0.15
    error_latency_factor: float = 6.0
    extra_failure_rates: Mapping[str, float] = field(default_factory=dict)

    def rates_for(self, spt: SystemPromptType, model_id: str) -> FailureRates:
        return self.failure_rates.get((spt, model_id), self.default_failure_rates)

    def validate(self) -> None:
        if self.num_prompts < 1:
            raise ConfigError("num_prompts must be >= 1")
        if not self.model_ids:
            raise ConfigError("model_ids must not be empty")
        if not self.system_prompt_types:
            raise ConfigError("system_prompt_types must not be empty")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.max_traces is not None and self.max_traces < 1:
            raise ConfigError("max_traces must be >= 1")
        for r in [self.default_failure_rates, *self.failure_rates.values()]:
            r.validate()
        for key in ("prompt", "completion"):
            if key not in self.token_distributions:
                raise ConfigError(f"token_distributions needs {key!r}")
        for kind in SpanKind:
            if kind.value not in self.latency_distributions:
                raise ConfigError(f"latency_distributions needs {kind.value!r}")
        for d in [*self.token_distributions.values(), *self.latency_distributions.values()]:
            if not d.sigma > 0:
                raise ConfigError("distribution sigmas must be > 0")
        for k, v in self.extra_failure_rates.items():
            if k not in EXTRA_FAILURE_KINDS:
                raise ConfigError(f"unknown extra failure kind {k!r}")
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{k} rate must lie in [0, 1]")
        if not 0.0 <= self.subtle_drift <= 1.0:
            raise ConfigError("subtle_drift must lie in [0, 1]")
        self.scenario.validate()

    def num_traces(self) -> int:
        full = self.num_prompts * len(self.system_prompt_types) * len(self.model_ids) * self.repetitions
        return full if self.max_traces is None else min(full, self.max_traces)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "num_prompts": self.num_prompts,
            "system_prompt_types": [t.value for t in self.system_prompt_types],
            "model_ids": list(self.model_ids),
            "failure_rates": [
                {"system_prompt_type": t.value, "model_id": m, **vars(r)}
                for (t, m), r in sorted(self.failure_rates.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
            ],
            "default_failure_rates": vars(self.default_failure_rates),
            "token_distributions": {k: [v.mu, v.sigma] for k, v in sorted(self.token_distributions.items())},
            "latency_distributions": {
                k: [v.mu, v.sigma] for k, v in sorted(self.latency_distributions.items())
            },
            "seed": self.seed,
            "repetitions": self.repetitions,
            "max_traces": self.max_traces,
            "subtle_drift": self.subtle_drift,
            "error_latency_factor": self.error_latency_factor,
            "extra_failure_rates": dict(sorted(self.extra_failure_rates.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GenerationConfig:
        try:
            scenario = get_scenario(d["scenario"])
            rates = {
                (SystemPromptType(r["system_prompt_type"]), r["model_id"]): FailureRates(
                    r.get("p_cycle", 0.0), r.get("p_error", 0.0), r.get("p_drift", 0.0)
                )
                for r in d.get("failure_rates", [])
            }
            kwargs: dict[str, Any] = dict(
                scenario=scenario,
                num_prompts=int(d["num_prompts"]),
                system_prompt_types=tuple(SystemPromptType(t) for t in d["system_prompt_types"]),
                model_ids=tuple(d["model_ids"]),
                failure_rates=rates,
                default_failure_rates=FailureRates(**d.get("default_failure_rates", {})),
            )
            if "token_distributions" in d:
                kwargs["token_distributions"] = {
                    k: LogNormal(*v) for k, v in d["token_distributions"].items()
                }
            if "latency_distributions" in d:
                kwargs["latency_distributions"] = {
                    k: LogNormal(*v) for k, v in d["latency_distributions"].items()
                }
            for key in ("seed", "repetitions", "max_traces", "subtle_drift", "error_latency_factor"):
                if key in d:
                    kwargs[key] = d[key]
            if "extra_failure_rates" in d:
                kwargs["extra_failure_rates"] = dict(d["extra_failure_rates"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid generation config: {exc!r}") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def with_seed(self, seed: int) -> GenerationConfig:
        return replace(self, seed=seed)


# Paper-scale dataset profiles: total traces, anomalies, and per-mode counts.
PAPER_TARGETS = {
    "stock_market": {"traces": 4275, "anomalies": 2921, "cycle": 1484, "error": 1245, "drift": 1952},
    "research_writing": {"traces": 894, "anomalies": 573, "cycle": 320, "error": 285, "drift": 410},
}

# Relative failure propensity of each prompt type / model; mean-zero offsets
# scaled by a fitted spread.
_TYPE_OFFSETS = {SystemPromptType.POOR: 1.0, SystemPromptType.GOOD: 0.0, SystemPromptType.STRICT: -1.0}
_MODEL_OFFSETS = {
    "gpt-4o": -0.5,
    "ibm-granite-3-1-8B": 0.5,
    "meta-llama-3-3-70B": 0.0,
}


def _cell_rates(base: FailureRates, offset: float, spread: float) -> FailureRates:
    m = 1.0 + spread * offset
    return FailureRates(base.p_cycle * m, base.p_error * m, base.p_drift * m)


def _anomaly_fraction(cells: Sequence[tuple[FailureRates, int]]) -> float:
    total = sum(w for _, w in cells)
    return sum(
        w * (1.0 - (1 - r.p_cycle) * (1 - r.p_error) * (1 - r.p_drift)) for r, w in cells
    ) / total


def default_paper_profile(scenario_name: str, seed: int = 0) -> GenerationConfig:
    """Generation config sized and calibrated to one of the paper-scale datasets.

    Per-mode injection probabilities are the target counts divided by the
    corpus size. Failure rates are then scaled per (prompt type, model) cell by
    ``1 + spread * offset``; the spread is solved by bisection so that the
    expected fraction of traces with at least one failure equals the target
    anomaly fraction. Mean-zero offsets keep the expected per-mode counts on
    target.
    """
    if scenario_name not in PAPER_TARGETS:
        raise ConfigError(f"unknown scenario {scenario_name!r}")
    scenario = get_scenario(scenario_name)
    target = PAPER_TARGETS[scenario_name]
    if scenario_name == "stock_market":
        types = (SystemPromptType.POOR, SystemPromptType.GOOD, SystemPromptType.STRICT)
        models = ("gpt-4o", "ibm-granite-3-1-8B", "meta-llama-3-3-70B")
        type_off = _TYPE_OFFSETS
        model_off = _MODEL_OFFSETS
        num_prompts, reps, max_traces = 475, 1, None
    else:
        types = (SystemPromptType.POOR, SystemPromptType.GOOD)
        models = ("ibm-granite-3-1-8B", "meta-llama-3-3-70B")
        type_off = {SystemPromptType.POOR: 1.0, SystemPromptType.GOOD: -1.0}
        model_off = {"ibm-granite-3-1-8B": 0.5, "meta-llama-3-3-70B": -0.5}
        num_prompts, reps, max_traces = 112, 2, 894

    n = target["traces"]
    base = FailureRates(target["cycle"] / n, target["error"] / n, target["drift"] / n)

    # Traces per cell, honouring truncation of the last repetition.
    per_cell = {(t, m): 0 for t in types for m in models}
    combos = [(t, m) for _ in range(num_prompts) for t in types for m in models]
    total = num_prompts * len(types) * len(models) * reps
    limit = total if max_traces is None else max_traces
    for i in range(limit):
        per_cell[combos[i % len(combos)]] += 1

    # Centre offsets on their trace-weighted mean so per-mode expectations
    # stay exact even when truncation leaves cells unequal.
    raw = {(t, m): type_off[t] + model_off[m] for t, m in per_cell}
    centre = sum(raw[c] * w for c, w in per_cell.items()) / limit
    offset = {c: o - centre for c, o in raw.items()}

    def cells(spread: float) -> list[tuple[FailureRates, int]]:
        return [(_cell_rates(base, offset[c], spread), w) for c, w in per_cell.items()]

    max_offset = max(offset.values())
    hi = (1.0 / max(base.p_cycle, base.p_error, base.p_drift) - 1.0) / max_offset
    hi = min(hi, 1.0 / max_offset)  # keep every multiplier non-negative
    goal = target["anomalies"] / n
    lo = 0.0
    if _anomaly_fraction(cells(hi)) <= goal:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _anomaly_fraction(cells(mid)) > goal:
                lo = mid
            else:
                hi = mid
        spread = 0.5 * (lo + hi)
    else:
        spread = hi
    rates = {c: _cell_rates(base, offset[c], spread) for c in per_cell}
    cfg = GenerationConfig(
        scenario=scenario,
        num_prompts=num_prompts,
        system_prompt_types=types,
        model_ids=models,
        failure_rates=rates,
        default_failure_rates=base,
        seed=seed,
        repetitions=reps,
        max_traces=max_traces,
    )
    cfg.validate()
    return cfg


def expected_counts(config: GenerationConfig) -> dict[str, float]:
    """Expected number of traces per injected mode and with any failure."""
    out = {"cycle": 0.0, "error": 0.0, "drift": 0.0, "anomaly": 0.0}
    for _, spt, model, _ in _enumerate_combos(config):
        r = config.rates_for(spt, model)
        out["cycle"] += r.p_cycle
        out["error"] += r.p_error
        out["drift"] += r.p_drift
        out["anomaly"] += 1.0 - (1 - r.p_cycle) * (1 - r.p_error) * (1 - r.p_drift)
    return out


@dataclass
class GeneratedCorpus:
    traces: list[Trace]
    ground_truth: GroundTruthRegistry
    injected: dict[str, dict[str, bool]]
    emitted: dict[str, Trajectory]

    def injected_json(self) -> str:
        return json.dumps(self.injected, indent=1, sort_keys=True) + "\n"

    def ground_truth_json(self) -> str:
        return json.dumps(self.ground_truth.to_dict(), indent=1, sort_keys=True) + "\n"


def _enumerate_combos(config: GenerationConfig):
    """Canonical (prompt_index, type, model, repetition) order, repetition-major."""
    out = []
    for rep in range(config.repetitions):
        for p in range(config.num_prompts):
            for spt in config.system_prompt_types:
                for model in config.model_ids:
                    out.append((p, spt, model, rep))
    limit = config.num_traces()
    return out[:limit]


def prompt_id(index: int) -> str:
    return f"p{index:04d}"


def prompt_text(scenario: ScenarioSpec, index: int) -> tuple[PromptTemplate, str]:
    tpls = scenario.prompt_templates
    tpl = tpls[index % len(tpls)]
    subject = scenario.subjects[(index // len(tpls)) % len(scenario.subjects)]
    return tpl, tpl.text.format(s=subject)


@dataclass
class _Node:
    kind: SpanKind
    name: str
    parent: int | None
    children: list[int] = field(default_factory=list)
    status: Status = Status.OK
    latency_factor: float = 1.0
    note: str = ""


def _build_tree(path: Sequence[Step], scenario: ScenarioSpec, model: str) -> list[_Node]:
    """Realize an agent/tool path as a span tree, one LLM call under every agent.

    An agent attaches below its declared parent when that parent is on the
    current delegation stack, otherwise below the root; tools attach to the
    innermost active agent.
    """
    parents = scenario.agent_parent
    nodes: list[_Node] = []
    stack: list[int] = []
    for kind, name in path:
        if not nodes:
            nodes.append(_Node(kind, name, None))
            stack.append(0)
            nodes.append(_Node(SpanKind.LLM, model, 0))
            nodes[0].children.append(1)
            continue
        if kind is SpanKind.AGENT:
            want = parents.get(name)
            names_on_stack = [nodes[i].name for i in stack]
            if want in names_on_stack:
                while nodes[stack[-1]].name != want:
                    stack.pop()
            else:
                del stack[1:]
            parent = stack[-1]
            idx = len(nodes)
            nodes.append(_Node(kind, name, parent))
            nodes[parent].children.append(idx)
            stack.append(idx)
            nodes.append(_Node(SpanKind.LLM, model, idx))
            nodes[idx].children.append(idx + 1)
        else:
            parent = stack[-1]
            nodes.append(_Node(kind, name, parent))
            nodes[parent].children.append(len(nodes) - 1)
    return nodes


def _add_llm(nodes: list[_Node], parent: int, model: str, note: str) -> None:
    nodes.append(_Node(SpanKind.LLM, model, parent, note=note))
    nodes[parent].children.append(len(nodes) - 1)


def _owning_agent(nodes: list[_Node], idx: int) -> int:
    while nodes[idx].kind is not SpanKind.AGENT:
        idx = nodes[idx].parent  # type: ignore[assignment]
    return idx


_DRIFT_DELTAS = np.array([-1, 0, 1, 2, 3])
_DRIFT_WEIGHTS = np.array([0.05, 0.10, 0.35, 0.30, 0.20])


def _inject_drift(
    path: list[Step],
    scenario: ScenarioSpec,
    accepted: frozenset[Trajectory],
    subtle: bool,
    rng: np.random.Generator,
) -> list[Step]:
    root = path[0]
    pool_all = [n for n in scenario.nodes() if n != root]
    for _ in range(1000):
        cut = int(rng.integers(1, len(path))) if len(path) > 1 else 1
        tail = len(path) - cut
        if subtle:
            m = max(1, tail - int(rng.integers(0, 2)))
        else:
            m = max(1, tail + int(rng.choice(_DRIFT_DELTAS, p=_DRIFT_WEIGHTS)))
        kept = path[:cut]
        pool = [n for n in pool_all if n not in kept]
        m = min(m, len(pool))
        picks = rng.choice(len(pool), size=m, replace=False)
        cand = kept + [pool[i] for i in picks]
        if Trajectory(tuple(cand)) not in accepted:
            return cand
    raise ScenarioError("could not draw a drifted path")  # pragma: no cover


def _inject_cycle(path: list[Step], rng: np.random.Generator) -> list[Step]:
    # Contiguous block [i, j) with the root excluded, replayed right after itself.
    n = len(path)
    pairs = [(i, j) for i in range(1, n) for j in range(i + 1, n + 1)]
    if not pairs:
        return path + path
    i, j = pairs[int(rng.integers(len(pairs)))]
    return path[:j] + path[i:j] + path[j:]


def _tokens(text: str) -> int:
    return len(text.split())


def _generate_one(
    config: GenerationConfig,
    combo_index: int,
    p_index: int,
    spt: SystemPromptType,
    model: str,
    rep: int,
) -> tuple[Trace, dict[str, bool], Trajectory]:
    scenario = config.scenario
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(combo_index,)))
    tpl, query = prompt_text(scenario, p_index)
    pid = prompt_id(p_index)
    accepted = frozenset(tpl.expected)
    rates = config.rates_for(spt, model)

    # Fixed draw order keeps traces reproducible regardless of which modes fire.
    u = rng.random(3)
    flags = {
        "cycle": bool(u[0] < rates.p_cycle),
        "error": bool(u[1] < rates.p_error),
        "drift": bool(u[2] < rates.p_drift),
    }
    extra_u = rng.random(len(EXTRA_FAILURE_KINDS))
    for k, uu in zip(EXTRA_FAILURE_KINDS, extra_u):
        flags[k] = bool(uu < config.extra_failure_rates.get(k, 0.0))
    subtle = bool(rng.random() < config.subtle_drift)

    path = list(tpl.expected[int(rng.integers(len(tpl.expected)))].steps)
    if flags["drift"]:
        path = _inject_drift(path, scenario, accepted, subtle, rng)
    if flags["cycle"]:
        path = _inject_cycle(path, rng)

    nodes = _build_tree(path, scenario, model)
    if flags["drift"] and not subtle:
        # Irrelevant results push the orchestrator into another planning call.
        _add_llm(nodes, 0, model, "replan")
    if flags["error"]:
        victim = int(rng.integers(len(nodes)))
        nodes[victim].status = Status.ERROR
        nodes[victim].latency_factor = config.error_latency_factor
        _add_llm(nodes, _owning_agent(nodes, victim), model, "recover")
    if flags["tool_failure"]:
        tools = [i for i, nd in enumerate(nodes) if nd.kind is SpanKind.TOOL]
        if tools:
            nodes[tools[int(rng.integers(len(tools)))]].latency_factor *= 3.0

    trace_id = f"{scenario.name}.{pid}.{spt.value.lower()}.m{config.model_ids.index(model)}.r{rep}"
    system_prompt = SYSTEM_PROMPTS[spt]
    lat = config.latency_distributions
    tok = config.token_distributions

    spans: list[Span] = []
    emitted: list[Step] = []
    context: list[str] = []
    clock = EPOCH_NS + int(rng.integers(0, 10**15))
    span_counter = 0

    def visit(idx: int, parent_sid: str | None) -> int:
        nonlocal clock, span_counter
        nd = nodes[idx]
        span_counter += 1
        sid = f"{span_counter:016x}"
        emitted.append((nd.kind, nd.name))
        start = clock
        attrs: dict[str, Any] = {}
        if nd.kind is SpanKind.LLM:
            ctx = "" if flags["context_propagation"] else " ".join(context)
            agent = nodes[nd.parent].name if nd.parent is not None else ""
            owned = " ".join(t for t, owner in scenario.tools if owner == agent) or "none"
            text = f"{system_prompt} Agent: {agent}. Tools: {owned}. User: {query} Context: {ctx}"
            if nd.note == "recover":
                text += " The previous step failed with an error; decide how to recover."
            elif nd.note == "replan":
                text += " The results so far do not answer the question; re-plan."
            completion = f"{agent} plans the next step for {tpl.template_id}"
            attrs = {
                REQUEST_MODEL: model,
                PROMPT: text,
                COMPLETION: completion,
                PROMPT_TOKENS: _tokens(text) + int(round(tok["prompt"].sample(rng))),
                COMPLETION_TOKENS: int(round(tok["completion"].sample(rng))),
            }
        if nd.kind is SpanKind.AGENT or not nd.children:
            context.append(f"{nd.name}_{'failed' if nd.status is Status.ERROR else 'done'}")
        if nd.kind is SpanKind.TOOL:
            picks = rng.choice(len(OBSERVATION_WORDS), size=OBSERVATION_SIZE, replace=False)
            context.extend(OBSERVATION_WORDS[i] for i in picks)
        if parent_sid is None:
            attrs = {
                INPUT_PROMPT_ID: pid,
                SYSTEM_PROMPT_TYPE: spt.value,
                REQUEST_MODEL: model,
                PROMPT: system_prompt,
            }
        if nd.children:
            clock += max(1, int(lat["AGENT"].sample(rng) * 1e6))
            for c in nd.children:
                clock = visit(c, sid) + max(1, int(rng.integers(1, 5_000_000)))
            end = clock + max(1, int(lat["AGENT"].sample(rng) * 1e6 * nd.latency_factor))
        else:
            end = start + max(1, int(lat[nd.kind.value].sample(rng) * 1e6 * nd.latency_factor))
        spans.append(
            Span(
                trace_id=trace_id,
                span_id=sid,
                parent_span_id=parent_sid,
                name=nd.name,
                kind=nd.kind,
                start_time=start,
                end_time=end,
                status=nd.status,
                attributes=attrs,
            )
        )
        clock = end
        return end

    visit(0, None)
    spans.sort(key=lambda s: s.span_id)
    return build_trace(spans), flags, Trajectory(tuple(emitted))


def generate(config: GenerationConfig) -> GeneratedCorpus:
    """Generate one trace per configured combination; deterministic in ``config``."""
    config.validate()
    traces: list[Trace] = []
    injected: dict[str, dict[str, bool]] = {}
    emitted: dict[str, Trajectory] = {}
    gt: dict[str, tuple[Trajectory, ...]] = {}
    for combo_index, (p_index, spt, model, rep) in enumerate(_enumerate_combos(config)):
        trace, flags, emission = _generate_one(config, combo_index, p_index, spt, model, rep)
        traces.append(trace)
        injected[trace.trace_id] = flags
        emitted[trace.trace_id] = emission
        tpl, _ = prompt_text(config.scenario, p_index)
        gt[prompt_id(p_index)] = tpl.expected
    traces.sort(key=lambda t: t.trace_id)
    return GeneratedCorpus(
        traces=traces,
        ground_truth=GroundTruthRegistry(gt),
        injected=injected,
        emitted=emitted,
    )
