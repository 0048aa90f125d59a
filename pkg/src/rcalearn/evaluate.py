"""Offline scoring of finished runs: precision@K, MAP@K, MRR over a set of
fault cases, plus a small wall-clock timer for per-batch cost."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DataError


@dataclass(frozen=True)
class FaultCase:
    """Final ranking produced for one incident, with its known causes."""

    case_id: str
    true_causes: frozenset[str]
    ranking: tuple[str, ...]

    def __post_init__(self):
        if not self.true_causes:
            raise DataError(f"case {self.case_id}: no true causes given")
        if len(set(self.ranking)) != len(self.ranking):
            raise DataError(f"case {self.case_id}: ranking contains duplicates")


def _case_precision(case: FaultCase, k: int) -> float:
    hits = sum(1 for name in case.ranking[:k] if name in case.true_causes)
    return hits / min(k, len(case.true_causes))


def precision_at_k(cases: Sequence[FaultCase], k: int) -> float:
    """Mean over cases of |top-K hits| / min(K, number of true causes)."""
    _check(cases, k)
    return sum(_case_precision(c, k) for c in cases) / len(cases)


def map_at_k(cases: Sequence[FaultCase], k: int) -> float:
    """Mean over cases of the average of that case's precision at 1..K."""
    _check(cases, k)
    per_case = [
        sum(_case_precision(c, j) for j in range(1, k + 1)) / k for c in cases
    ]
    return sum(per_case) / len(cases)


def mrr(cases: Sequence[FaultCase]) -> float:
    """Mean reciprocal rank of the first true cause; 0 when none is ranked."""
    _check(cases, 1)
    total = 0.0
    for case in cases:
        for i, name in enumerate(case.ranking):
            if name in case.true_causes:
                total += 1.0 / (i + 1)
                break
    return total / len(cases)


def summarize(cases: Sequence[FaultCase], ks: Sequence[int]) -> dict:
    return {
        "cases": len(cases),
        "pr": {k: precision_at_k(cases, k) for k in ks},
        "map": {k: map_at_k(cases, k) for k in ks},
        "mrr": mrr(cases),
    }


def _check(cases: Sequence[FaultCase], k: int) -> None:
    if not cases:
        raise DataError("no cases to score")
    if k < 1:
        raise ValueError("k must be at least 1")


@dataclass
class BatchTimer:
    """Accumulates wall-clock laps, one per trained batch."""

    laps: list[float] = field(default_factory=list)
    _started: float | None = None

    def __enter__(self) -> "BatchTimer":
        self._started = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        assert self._started is not None
        self.laps.append(time.perf_counter() - self._started)
        self._started = None

    @property
    def total(self) -> float:
        return sum(self.laps)

    @property
    def mean(self) -> float:
        if not self.laps:
            raise ValueError("no laps recorded")
        return self.total / len(self.laps)
