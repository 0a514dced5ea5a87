"""Stratified train/validation/test partitioning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0
    min_per_class: int = 10

    def __post_init__(self) -> None:
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise SplitError("need three non-negative fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise SplitError(f"fractions must sum to 1, got {sum(self.fractions)}")

    def to_dict(self) -> dict[str, Any]:
        return {"fractions": list(self.fractions), "seed": self.seed}


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer allocation of ``total`` proportional to ``fractions``.

    Floors first, then hands the leftover units to the largest fractional
    parts; ties go to the earlier part.
    """
    quotas = [total * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def stratified_split(y: Any, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays (train, val, test), each sorted ascending."""
    y = np.asarray(y)
    rng = np.random.default_rng(spec.seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < spec.min_per_class:
            raise SplitError(f"class {cls!r} has {idx.size} rows; need at least {spec.min_per_class}")
        idx = rng.permutation(idx)
        counts = largest_remainder(idx.size, spec.fractions)
        start = 0
        for k, c in enumerate(counts):
            parts[k].append(idx[start : start + c])
            start += c
    train, val, test = (np.sort(np.concatenate(p)) for p in parts)
    return train, val, test
