"""Span/trace data model, JSONL ingest, and trajectory extraction."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

# Reserved attribute keys.
PROMPT_TOKENS = "gen_ai.usage.prompt_tokens"
COMPLETION_TOKENS = "gen_ai.usage.completion_tokens"
REQUEST_MODEL = "gen_ai.request.model"
PROMPT = "gen_ai.prompt"
COMPLETION = "gen_ai.completion"
INPUT_PROMPT_ID = "app.input_prompt_id"
SYSTEM_PROMPT_TYPE = "app.system_prompt_type"

SPAN_FIELDS = (
    "trace_id",
    "span_id",
    "parent_span_id",
    "name",
    "kind",
    "start_time_unix_nano",
    "end_time_unix_nano",
    "status",
    "attributes",
)


class SpanKind(str, Enum):
    AGENT = "AGENT"
    TOOL = "TOOL"
    LLM = "LLM"


class Status(str, Enum):
    OK = "OK"
    ERROR = "ERROR"


class SystemPromptType(str, Enum):
    POOR = "POOR"
    GOOD = "GOOD"
    STRICT = "STRICT"


class TraceParseError(ValueError):
    """A line of a trace file could not be decoded into a span."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class TraceStructureError(ValueError):
    """A group of spans violates the trace invariants."""

    def __init__(self, message: str, trace_id: str | None = None):
        self.trace_id = trace_id
        if trace_id is not None:
            message = f"trace {trace_id!r}: {message}"
        super().__init__(message)


Step = tuple[SpanKind, str]


@dataclass(frozen=True)
class Span:
    trace_id: str
    span_id: str
    parent_span_id: str | None
    name: str
    kind: SpanKind
    start_time: int
    end_time: int
    status: Status = Status.OK
    attributes: dict[str, Any] = field(default_factory=dict)

    @property
    def duration_ms(self) -> float:
        return (self.end_time - self.start_time) / 1e6

    def to_dict(self) -> dict[str, Any]:
        return {
            "trace_id": self.trace_id,
            "span_id": self.span_id,
            "parent_span_id": self.parent_span_id,
            "name": self.name,
            "kind": self.kind.value,
            "start_time_unix_nano": self.start_time,
            "end_time_unix_nano": self.end_time,
            "status": self.status.value,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Span:
        missing = [k for k in SPAN_FIELDS if k not in d]
        if missing:
            raise ValueError(f"missing fields {missing}")
        extra = sorted(set(d) - set(SPAN_FIELDS))
        if extra:
            raise ValueError(f"unexpected fields {extra}")
        for key in ("trace_id", "span_id", "name"):
            if not isinstance(d[key], str):
                raise ValueError(f"{key} must be a string")
        parent = d["parent_span_id"]
        if parent is not None and not isinstance(parent, str):
            raise ValueError("parent_span_id must be a string or null")
        start, end = d["start_time_unix_nano"], d["end_time_unix_nano"]
        if not (_is_int(start) and _is_int(end)):
            raise ValueError("timestamps must be integers")
        attrs = d["attributes"]
        if not isinstance(attrs, dict) or any(isinstance(v, (dict, list)) for v in attrs.values()):
            raise ValueError("attributes must be a flat object")
        return cls(
            trace_id=d["trace_id"],
            span_id=d["span_id"],
            parent_span_id=parent,
            name=d["name"],
            kind=SpanKind(d["kind"]),
            start_time=start,
            end_time=end,
            status=Status(d["status"]),
            attributes=dict(attrs),
        )


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def token_count(span: Span, key: str) -> int:
    """Read a non-negative integer token attribute from an LLM span."""
    raw = span.attributes.get(key)
    if isinstance(raw, bool) or raw is None:
        raise ValueError(f"span {span.span_id!r}: missing {key}")
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"span {span.span_id!r}: {key} is not an integer") from None
    if value != raw and str(value) != str(raw):
        raise ValueError(f"span {span.span_id!r}: {key} is not an integer")
    if value < 0:
        raise ValueError(f"span {span.span_id!r}: {key} is negative")
    return value


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Step, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def to_list(self) -> list[list[str]]:
        return [[kind.value, name] for kind, name in self.steps]

    @classmethod
    def from_list(cls, items: Iterable[Iterable[str]]) -> Trajectory:
        return cls(tuple((SpanKind(k), str(n)) for k, n in items))


@dataclass(frozen=True)
class Trace:
    """A validated span tree for one input request.

    Construct through :func:`build_trace` (or :func:`parse_trace_file`), which
    enforces the tree and timing invariants.
    """

    trace_id: str
    spans: tuple[Span, ...]
    root: str
    input_prompt_id: str | None
    system_prompt_type: SystemPromptType | None
    model_id: str | None

    def span(self, span_id: str) -> Span:
        return self._index[span_id]

    @property
    def root_span(self) -> Span:
        return self._index[self.root]

    @property
    def _index(self) -> dict[str, Span]:
        idx = self.__dict__.get("_span_index")
        if idx is None:
            idx = {s.span_id: s for s in self.spans}
            object.__setattr__(self, "_span_index", idx)
        return idx

    def children(self) -> dict[str, list[Span]]:
        """Child lists keyed by parent span id, in traversal order."""
        kids: dict[str, list[Span]] = defaultdict(list)
        for s in self.spans:
            if s.parent_span_id is not None:
                kids[s.parent_span_id].append(s)
        for lst in kids.values():
            lst.sort(key=lambda s: (s.start_time, s.span_id))
        return kids


def build_trace(spans: Iterable[Span]) -> Trace:
    """Validate a group of spans sharing one trace_id and wrap them in a Trace."""
    spans = tuple(spans)
    if not spans:
        raise TraceStructureError("no spans")
    trace_id = spans[0].trace_id
    if any(s.trace_id != trace_id for s in spans):
        raise TraceStructureError("spans carry different trace ids", trace_id)

    index: dict[str, Span] = {}
    for s in spans:
        if s.span_id in index:
            raise TraceStructureError(f"duplicate span_id {s.span_id!r}", trace_id)
        index[s.span_id] = s
        if s.parent_span_id == s.span_id:
            raise TraceStructureError(f"span {s.span_id!r} is its own parent", trace_id)
        if s.end_time < s.start_time:
            raise TraceStructureError(f"span {s.span_id!r} ends before it starts", trace_id)
        if s.kind is SpanKind.LLM:
            try:
                token_count(s, PROMPT_TOKENS)
                token_count(s, COMPLETION_TOKENS)
            except ValueError as exc:
                raise TraceStructureError(str(exc), trace_id) from None
            if not isinstance(s.attributes.get(REQUEST_MODEL), str):
                raise TraceStructureError(f"LLM span {s.span_id!r} has no model id", trace_id)

    roots = [s for s in spans if s.parent_span_id is None]
    if len(roots) != 1:
        if not roots:
            raise TraceStructureError("no root span", trace_id)
        raise TraceStructureError("multiple roots", trace_id)
    root = roots[0]
    for s in spans:
        if s.parent_span_id is not None and s.parent_span_id not in index:
            raise TraceStructureError(
                f"dangling parent {s.parent_span_id!r} on span {s.span_id!r}", trace_id
            )

    # Reachability from the root rules out parent cycles in detached components.
    kids: dict[str, list[str]] = defaultdict(list)
    for s in spans:
        if s.parent_span_id is not None:
            kids[s.parent_span_id].append(s.span_id)
    seen = {root.span_id}
    stack = [root.span_id]
    while stack:
        for c in kids[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    if len(seen) != len(spans):
        raise TraceStructureError("parent links contain a cycle", trace_id)

    for s in spans:
        if s.start_time < root.start_time or s.end_time > root.end_time:
            raise TraceStructureError(
                f"span {s.span_id!r} lies outside the root interval", trace_id
            )

    attrs = root.attributes
    spt = attrs.get(SYSTEM_PROMPT_TYPE)
    try:
        system_prompt_type = SystemPromptType(str(spt).upper()) if spt is not None else None
    except ValueError:
        raise TraceStructureError(f"unknown system prompt type {spt!r}", trace_id) from None
    prompt_id = attrs.get(INPUT_PROMPT_ID)
    model_id = attrs.get(REQUEST_MODEL)
    return Trace(
        trace_id=trace_id,
        spans=spans,
        root=root.span_id,
        input_prompt_id=None if prompt_id is None else str(prompt_id),
        system_prompt_type=system_prompt_type,
        model_id=None if model_id is None else str(model_id),
    )


def parse_trace_lines(lines: Iterable[str]) -> list[Trace]:
    groups: dict[str, list[Span]] = defaultdict(list)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("expected a JSON object")
            span = Span.from_dict(obj)
        except (ValueError, TypeError) as exc:
            raise TraceParseError(str(exc), lineno) from None
        groups[span.trace_id].append(span)
    return [build_trace(groups[tid]) for tid in sorted(groups)]


def parse_trace_file(path: str | Path) -> list[Trace]:
    """Read a JSONL span file and return validated traces sorted by trace_id."""
    with open(path, encoding="utf-8") as fh:
        return parse_trace_lines(fh)


def serialize_traces(traces: Iterable[Trace]) -> str:
    out = []
    for t in traces:
        for s in t.spans:
            out.append(json.dumps(s.to_dict(), ensure_ascii=False, separators=(",", ":")))
    return "".join(line + "\n" for line in out)


def write_trace_file(traces: Iterable[Trace], path: str | Path) -> None:
    Path(path).write_text(serialize_traces(traces), encoding="utf-8")


def extract_trajectory(trace: Trace) -> Trajectory:
    """Depth-first pre-order walk; siblings ordered by (start_time, span_id)."""
    kids = trace.children()
    steps: list[Step] = []
    stack = [trace.root_span]
    while stack:
        s = stack.pop()
        steps.append((s.kind, s.name))
        stack.extend(reversed(kids.get(s.span_id, ())))
    return Trajectory(tuple(steps))


def agent_tool_path(trajectory: Trajectory) -> Trajectory:
    return Trajectory(tuple(st for st in trajectory.steps if st[0] is not SpanKind.LLM))


def span_depths(trace: Trace) -> dict[str, int]:
    """Depth of every span, root = 1."""
    kids = trace.children()
    depth = {trace.root: 1}
    stack = [trace.root]
    while stack:
        sid = stack.pop()
        for c in kids.get(sid, ()):
            depth[c.span_id] = depth[sid] + 1
            stack.append(c.span_id)
    return depth
