"""Rule-based trace labeling (cycle, error, drift) and annotator agreement."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .trace_model import (
    SpanKind,
    Status,
    Trace,
    Trajectory,
    agent_tool_path,
    extract_trajectory,
)


class Label(str, Enum):
    NORMAL = "normal"
    ANOMALY = "anomaly"


class LabelingError(ValueError):
    def __init__(self, message: str, trace_ids: Sequence[str] = ()):
        self.trace_ids = list(trace_ids)
        super().__init__(message)


def has_repeated_node(path: Trajectory) -> bool:
    counts = Counter(step for step in path.steps if step[0] is not SpanKind.LLM)
    return any(c >= 2 for c in counts.values())


class GroundTruthRegistry:
    """Accepted agent/tool trajectories per input prompt id."""

    def __init__(self, expected: Mapping[str, Iterable[Trajectory]] | None = None):
        self._expected: dict[str, frozenset[Trajectory]] = {}
        for prompt_id, paths in (expected or {}).items():
            for p in paths:
                self.register(prompt_id, p)

    def register(self, prompt_id: str, path: Trajectory) -> None:
        path = agent_tool_path(path)
        if not path.steps:
            raise ValueError(f"empty expected trajectory for prompt {prompt_id!r}")
        if has_repeated_node(path):
            raise ValueError(f"expected trajectory for prompt {prompt_id!r} contains a cycle")
        self._expected[prompt_id] = self._expected.get(prompt_id, frozenset()) | {path}

    def __contains__(self, prompt_id: object) -> bool:
        return prompt_id in self._expected

    def __getitem__(self, prompt_id: str) -> frozenset[Trajectory]:
        return self._expected[prompt_id]

    def __len__(self) -> int:
        return len(self._expected)

    def prompt_ids(self) -> list[str]:
        return sorted(self._expected)

    def to_dict(self) -> dict[str, list[list[list[str]]]]:
        return {
            pid: sorted(p.to_list() for p in self._expected[pid]) for pid in sorted(self._expected)
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Sequence[Sequence[Sequence[str]]]]) -> GroundTruthRegistry:
        return cls({pid: [Trajectory.from_list(p) for p in paths] for pid, paths in d.items()})

    @classmethod
    def load(cls, path: str | Path) -> GroundTruthRegistry:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class LabelRecord:
    trace_id: str
    cycle: bool
    error: bool
    drift: bool

    @property
    def label(self) -> Label:
        return Label.ANOMALY if (self.cycle or self.error or self.drift) else Label.NORMAL

    @property
    def is_anomaly(self) -> bool:
        return self.label is Label.ANOMALY


def detect_cycle(trace: Trace) -> bool:
    """True if any agent or tool node is invoked more than once."""
    return has_repeated_node(agent_tool_path(extract_trajectory(trace)))


def detect_error(trace: Trace) -> bool:
    return any(s.status is Status.ERROR for s in trace.spans)


def detect_drift(trace: Trace, registry: GroundTruthRegistry) -> bool:
    """True if the observed agent/tool path matches none of the accepted paths."""
    pid = trace.input_prompt_id
    if pid is None or pid not in registry:
        raise LabelingError(
            f"trace {trace.trace_id!r}: no ground truth for prompt {pid!r}", [trace.trace_id]
        )
    return agent_tool_path(extract_trajectory(trace)) not in registry[pid]


def label_trace(trace: Trace, registry: GroundTruthRegistry) -> LabelRecord:
    return LabelRecord(
        trace_id=trace.trace_id,
        cycle=detect_cycle(trace),
        error=detect_error(trace),
        drift=detect_drift(trace, registry),
    )


def label_corpus(traces: Sequence[Trace], registry: GroundTruthRegistry) -> list[LabelRecord]:
    unknown = [
        t.trace_id
        for t in traces
        if t.input_prompt_id is None or t.input_prompt_id not in registry
    ]
    if unknown:
        raise LabelingError(
            f"{len(unknown)} trace(s) reference prompts missing from the ground truth: "
            + ", ".join(unknown),
            unknown,
        )
    return [label_trace(t, registry) for t in traces]


def cohens_kappa(labels_a: Sequence[object], labels_b: Sequence[object]) -> float:
    """Chance-corrected agreement between two annotators' labels."""
    if len(labels_a) != len(labels_b):
        raise ValueError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise ValueError("need at least one label")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1.0:
        # Both annotators used one and the same class throughout.
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


LABEL_COLUMNS = ("trace_id", "cycle", "error", "drift", "label")


def labels_to_csv(records: Iterable[LabelRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(LABEL_COLUMNS)
    for r in records:
        w.writerow([r.trace_id, int(r.cycle), int(r.error), int(r.drift), r.label.value])
    return buf.getvalue()


def read_labels_csv(path: str | Path) -> list[LabelRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LABEL_COLUMNS:
            raise ValueError(f"{path}: expected columns {LABEL_COLUMNS}")
        out = []
        for row in reader:
            rec = LabelRecord(
                trace_id=row["trace_id"],
                cycle=row["cycle"] == "1",
                error=row["error"] == "1",
                drift=row["drift"] == "1",
            )
            if rec.label.value != row["label"]:
                raise ValueError(f"{path}: inconsistent label for {rec.trace_id!r}")
            out.append(rec)
        return out
