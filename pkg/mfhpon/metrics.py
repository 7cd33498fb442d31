"""
Delay accounting and result statistics.

Delays are kept as exact per-frame samples (integer picoseconds) per
traffic class, so tail percentiles such as the 99.999th are order
statistics rather than histogram estimates. Replications are pooled by
concatenating their stores.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from mfhpon.engine import SimTime, SimulationError

logger = logging.getLogger(__name__)

CONVENTIONAL_CLASS = "conventional"
PERCENTILES: tuple[float, ...] = (1, 25, 50, 75, 99, 99.999)

CSV_COLUMNS = [
    "scenario",
    "scheme",
    "b_factor",
    "class",
    "samples",
    "min_ps",
    "p1_ps",
    "p25_ps",
    "p50_ps",
    "p75_ps",
    "p99_ps",
    "p99999_ps",
    "max_ps",
    "mean_ps",
    "meets_budget",
    "utilization",
    "grant_waste_ratio",
]

_PERCENTILE_COLUMNS = dict(zip(PERCENTILES, ("p1_ps", "p25_ps", "p50_ps", "p75_ps", "p99_ps", "p99999_ps"), strict=True))


class EmptyStore(SimulationError):
    """Percentile asked of a class with no samples."""


class AllZero(SimulationError):
    """Jain index of an all-zero allocation."""


def mfh_class(onu_id: int) -> str:
    return f"mfh-{onu_id}"


@dataclass
class ClassCounters:
    frames: int = 0
    payload_bytes: int = 0
    grants: int = 0
    granted_bytes: int = 0
    wasted_bytes: int = 0

    def add(self, other: ClassCounters) -> None:
        self.frames += other.frames
        self.payload_bytes += other.payload_bytes
        self.grants += other.grants
        self.granted_bytes += other.granted_bytes
        self.wasted_bytes += other.wasted_bytes


class DelayStats:
    """Append-only delay samples and grant counters per traffic class.

    Frames that arrived before warmup are delivered but not sampled.
    """

    def __init__(self, classes: Iterable[str], warmup: SimTime = 0) -> None:
        self.classes = list(classes)
        self.warmup = warmup
        self._chunks: dict[str, list[np.ndarray]] = {name: [] for name in self.classes}
        self._sorted: dict[str, np.ndarray] = {}
        self.counters: dict[str, ClassCounters] = {name: ClassCounters() for name in self.classes}

    def record_delay(self, class_name: str, arrival_time: SimTime, completion_time: SimTime) -> None:
        """Sample one frame fully received at the OLT."""
        self.record_frames(
            class_name, np.array([arrival_time], dtype=np.int64), np.array([completion_time], dtype=np.int64)
        )

    def record_frames(self, class_name: str, arrivals: np.ndarray, completions: np.ndarray) -> None:
        if len(arrivals) == 0:
            return
        delays = completions - arrivals
        if self.warmup > 0:
            delays = delays[arrivals >= self.warmup]
        if len(delays):
            self._chunks[class_name].append(delays)
            self._sorted.pop(class_name, None)
        self.counters[class_name].frames += len(arrivals)

    def record_grant(self, class_name: str, granted_bytes: int, payload_bytes: int) -> None:
        counters = self.counters[class_name]
        counters.grants += 1
        counters.granted_bytes += granted_bytes
        counters.payload_bytes += payload_bytes
        counters.wasted_bytes += granted_bytes - payload_bytes

    def samples(self, class_name: str) -> np.ndarray:
        """Sorted samples of a class."""
        cached = self._sorted.get(class_name)
        if cached is None:
            chunks = self._chunks[class_name]
            cached = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
            self._chunks[class_name] = [cached] if len(cached) else []
            self._sorted[class_name] = cached
        return cached

    def sample_count(self, class_name: str) -> int:
        return sum(len(c) for c in self._chunks[class_name])

    def merge(self, other: DelayStats) -> None:
        """Pool another replication's samples and counters into this one."""
        for name in other.classes:
            if name not in self._chunks:
                self.classes.append(name)
                self._chunks[name] = []
                self.counters[name] = ClassCounters()
            self._chunks[name].extend(other._chunks[name])
            self._sorted.pop(name, None)
            self.counters[name].add(other.counters[name])

    @classmethod
    def pooled(cls, stores: Sequence[DelayStats]) -> DelayStats:
        merged = cls(stores[0].classes if stores else [], stores[0].warmup if stores else 0)
        for store in stores:
            merged.merge(store)
        return merged


def percentile(samples: np.ndarray | Sequence[int], p: float) -> int:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample.

    Raises:
        EmptyStore: If there are no samples.
        ValueError: If p is outside (0, 100].
    """
    n = len(samples)
    if n == 0:
        raise EmptyStore("No samples recorded")
    if not 0 < p <= 100:
        raise ValueError(f"Percentile must be in (0, 100], got {p}")
    rank = max(1, math.ceil(Fraction(str(p)) * n / 100))
    ordered = samples if _is_sorted(samples) else np.sort(np.asarray(samples))
    return int(ordered[rank - 1])


def _is_sorted(samples: np.ndarray | Sequence[int]) -> bool:
    arr = np.asarray(samples)
    return bool(np.all(arr[:-1] <= arr[1:]))


def jain_index(values: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2).

    Raises:
        AllZero: If every value is zero.
        ValueError: On an empty sequence or negative values.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("Jain index of an empty allocation")
    if np.any(arr < 0):
        raise ValueError("Jain index needs non-negative values")
    squares = float(np.sum(arr * arr))
    if squares == 0.0:
        raise AllZero("Every value is zero")
    return float(np.sum(arr)) ** 2 / (arr.size * squares)


@dataclass
class ClassSummary:
    name: str
    samples: int
    min_ps: int
    percentiles: dict[float, int]
    max_ps: int
    mean_ps: float
    granted_bytes: int = 0
    wasted_bytes: int = 0

    @property
    def grant_waste_ratio(self) -> float | None:
        return self.wasted_bytes / self.granted_bytes if self.granted_bytes else None


def summarize_class(name: str, samples: np.ndarray, counters: ClassCounters | None = None) -> ClassSummary | None:
    """Statistics of one class, or None when it has no samples."""
    if len(samples) == 0:
        return None
    counters = counters or ClassCounters()
    return ClassSummary(
        name=name,
        samples=len(samples),
        min_ps=int(samples[0]),
        percentiles={p: percentile(samples, p) for p in PERCENTILES},
        max_ps=int(samples[-1]),
        mean_ps=float(np.mean(samples)),
        granted_bytes=counters.granted_bytes,
        wasted_bytes=counters.wasted_bytes,
    )


@dataclass
class SummaryRecord:
    """Pooled statistics of one (scenario, scheme, b_factor) cell."""

    scenario: str
    scheme: str
    b_factor: float
    classes: dict[str, ClassSummary | None]
    utilization: dict[int, float]
    budget_ps: SimTime
    counters: dict[str, ClassCounters] = field(default_factory=dict)

    @property
    def mean_utilization(self) -> float:
        return sum(self.utilization.values()) / len(self.utilization) if self.utilization else 0.0

    def p99999(self, class_name: str) -> int | None:
        summary = self.classes.get(class_name)
        return summary.percentiles[99.999] if summary else None

    def meets_budget(self, class_name: str) -> bool | None:
        if class_name == CONVENTIONAL_CLASS:
            return None
        tail = self.p99999(class_name)
        return None if tail is None else tail < self.budget_ps

    def rows(self) -> list[dict[str, Any]]:
        """One CSV row per class, absent classes with empty statistics."""
        rows = []
        for name, summary in self.classes.items():
            counters = self.counters.get(name, ClassCounters())
            row: dict[str, Any] = dict.fromkeys(CSV_COLUMNS, "")
            row.update(
                scenario=self.scenario,
                scheme=self.scheme,
                b_factor=f"{self.b_factor:.2f}",
                samples=0,
                utilization=f"{self.mean_utilization:.6f}",
            )
            row["class"] = name
            if counters.granted_bytes:
                row["grant_waste_ratio"] = f"{counters.wasted_bytes / counters.granted_bytes:.6f}"
            if summary is not None:
                row.update(samples=summary.samples, min_ps=summary.min_ps, max_ps=summary.max_ps)
                row["mean_ps"] = f"{summary.mean_ps:.3f}"
                for p, column in _PERCENTILE_COLUMNS.items():
                    row[column] = summary.percentiles[p]
            verdict = self.meets_budget(name)
            if verdict is not None:
                row["meets_budget"] = str(verdict).lower()
            rows.append(row)
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "scheme": self.scheme,
            "b_factor": self.b_factor,
            "budget_ps": self.budget_ps,
            "utilization": {str(k): v for k, v in self.utilization.items()},
            "classes": self.rows(),
        }


def summarize(
    stats: DelayStats,
    busy_ps: dict[int, SimTime],
    total_time: SimTime,
    *,
    scenario: str,
    scheme: str,
    b_factor: float,
    budget_ps: SimTime,
) -> SummaryRecord:
    """Per-class order statistics plus channel utilization of a (pooled) run.

    total_time is the observed time summed over pooled replications.
    """
    classes = {name: summarize_class(name, stats.samples(name), stats.counters[name]) for name in stats.classes}
    utilization = {cid: (busy / total_time if total_time > 0 else 0.0) for cid, busy in sorted(busy_ps.items())}
    return SummaryRecord(
        scenario=scenario,
        scheme=scheme,
        b_factor=b_factor,
        classes=classes,
        utilization=utilization,
        budget_ps=budget_ps,
        counters=dict(stats.counters),
    )
