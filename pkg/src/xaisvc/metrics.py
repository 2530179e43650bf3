"""Consistency and performance metrics for masked-reprediction explanations.

All operations are pure functions over immutable inputs and are safe to call
concurrently. Confidences are plain floats in [0, 1]; prediction-change
values (deltas) are nonnegative floats and may exceed 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

from .errors import (
    EmptyInput,
    EmptyRange,
    InsufficientSamples,
    NoCandidates,
    ZeroDenominator,
)

# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Explanation:
    """One sample's masked-reprediction record.

    ``delta`` is the relative prediction change |masked - original| / original
    and must agree with the value recomputed from the stored confidences.
    """

    sample_id: str
    method_id: str
    original: float
    masked: float
    delta: float

    def __post_init__(self):
        expected = prediction_change(self.original, self.masked)
        if abs(expected - self.delta) > 1e-12:
            raise ValueError(
                f"delta {self.delta} inconsistent with confidences "
                f"({self.original}, {self.masked}): expected {expected}"
            )

    @classmethod
    def from_confidences(cls, sample_id: str, method_id: str,
                         original: float, masked: float) -> "Explanation":
        return cls(sample_id, method_id, original, masked,
                   prediction_change(original, masked))


@dataclass(frozen=True)
class ExplanationSet:
    """Explanations produced by one method over one dataset."""

    method_id: str
    explanations: tuple[Explanation, ...]

    def __post_init__(self):
        object.__setattr__(self, "explanations", tuple(self.explanations))
        for e in self.explanations:
            if e.method_id != self.method_id:
                raise ValueError(
                    f"explanation {e.sample_id} belongs to method "
                    f"{e.method_id!r}, not {self.method_id!r}"
                )

    @property
    def m(self) -> int:
        return len(self.explanations)

    @property
    def deltas(self) -> list[float]:
        return [e.delta for e in self.explanations]


@dataclass(frozen=True)
class StabilityResult:
    """Mean pairwise distance over all C(m, 2) explanation pairs."""

    mean_pairwise_distance: float
    pair_count: int
    m: int


@dataclass(frozen=True)
class HistogramSummary:
    """Equal-width histogram; overflow clips into the boundary bins."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    total: int

    def __post_init__(self):
        object.__setattr__(self, "bin_edges", tuple(self.bin_edges))
        object.__setattr__(self, "counts", tuple(self.counts))
        if len(self.bin_edges) != len(self.counts) + 1:
            raise ValueError("bin_edges must have exactly one more entry than counts")
        if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ValueError("bin_edges must be strictly increasing")
        if sum(self.counts) != self.total:
            raise ValueError("counts must sum to total")


@dataclass(frozen=True)
class ClassificationCounts:
    true_positives: int
    false_positives: int
    false_negatives: int

    def __post_init__(self):
        for name in ("true_positives", "false_positives", "false_negatives"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class PerformanceReport:
    precision: float
    recall: float
    f1: float
    degenerate: frozenset[str] = field(default_factory=frozenset)


# ---------------------------------------------------------------------------
# Prediction change
# ---------------------------------------------------------------------------


def prediction_change(original: float, masked: float) -> float:
    """Relative change |masked - original| / original.

    Raises ZeroDenominator when original is 0 (the sample must be excluded
    or re-predicted); scale-invariant in its two arguments.
    """
    _check_confidence(original, "original")
    _check_confidence(masked, "masked")
    if original == 0.0:
        raise ZeroDenominator()
    value = abs(masked - original) / original
    if not math.isfinite(value):
        raise ValueError(f"non-finite prediction change from ({original}, {masked})")
    return value


def batch_changes(pairs: Sequence[tuple[float, float]]) -> list[float]:
    """Element-wise prediction_change, preserving order.

    A zero original reports the index of the first offending pair.
    """
    out = []
    for i, (original, masked) in enumerate(pairs):
        try:
            out.append(prediction_change(original, masked))
        except ZeroDenominator:
            raise ZeroDenominator(f"original confidence is 0 at index {i}", index=i)
    return out


def _check_confidence(value: float, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} confidence must be in [0, 1], got {value}")


# ---------------------------------------------------------------------------
# Stability (intra-method consistency)
# ---------------------------------------------------------------------------


PairDistance = Callable[[Explanation, Explanation], float]


def abs_delta_distance(a: Explanation, b: Explanation) -> float:
    """Default pair distance: absolute difference of prediction changes."""
    return abs(a.delta - b.delta)


def squared_delta_distance(a: Explanation, b: Explanation) -> float:
    return (a.delta - b.delta) ** 2


DISTANCE_SELECTORS: dict[str, PairDistance] = {
    "abs_delta": abs_delta_distance,
    "squared_delta": squared_delta_distance,
}


def stability(explanation_set: ExplanationSet,
              distance: PairDistance | str = "abs_delta") -> StabilityResult:
    """Mean of ``distance`` over all unordered explanation pairs.

    Identical explanations give exactly 0; permutation of the set does not
    change the result. Requires at least two explanations.
    """
    if isinstance(distance, str):
        try:
            distance = DISTANCE_SELECTORS[distance]
        except KeyError:
            raise ValueError(f"unknown distance selector {distance!r}") from None
    m = explanation_set.m
    if m < 2:
        raise InsufficientSamples(f"stability needs m >= 2, got m={m}")
    pair_count = m * (m - 1) // 2
    total = math.fsum(distance(a, b)
                      for a, b in combinations(explanation_set.explanations, 2))
    return StabilityResult(total / pair_count, pair_count, m)


# ---------------------------------------------------------------------------
# Distribution summaries
# ---------------------------------------------------------------------------


def histogram(deltas: Sequence[float], bins: int = 50,
              value_range: tuple[float, float] = (0.0, 1.0)) -> HistogramSummary:
    """Equal-width bins over [lo, hi); the last bin is closed.

    Values beyond hi clip into the last bin (deltas may exceed 1), values
    below lo into the first. Counts always sum to the input length.
    """
    lo, hi = value_range
    if hi <= lo:
        raise EmptyRange(f"histogram range must satisfy hi > lo, got [{lo}, {hi}]")
    if bins < 1:
        raise EmptyRange(f"bins must be >= 1, got {bins}")
    width = (hi - lo) / bins
    counts = [0] * bins
    for v in deltas:
        idx = int((v - lo) / width)
        counts[min(max(idx, 0), bins - 1)] += 1
    edges = tuple(lo + i * width for i in range(bins)) + (hi,)
    return HistogramSummary(edges, tuple(counts), len(deltas))


def fraction_exceeding(deltas: Sequence[float], threshold: float) -> float:
    """Proportion of values strictly greater than the threshold."""
    if not deltas:
        raise EmptyInput("fraction_exceeding needs at least one value")
    return sum(1 for v in deltas if v > threshold) / len(deltas)


def mean_change(deltas: Sequence[float]) -> float:
    """Arithmetic mean of prediction changes."""
    if not deltas:
        raise EmptyInput("mean_change needs at least one value")
    return math.fsum(deltas) / len(deltas)


def quartile_summary(deltas: Sequence[float]) -> dict[str, float]:
    """Violin-plot-ready five-number summary (linear interpolation)."""
    if not deltas:
        raise EmptyInput("quartile_summary needs at least one value")
    ordered = sorted(deltas)

    def q(p: float) -> float:
        pos = p * (len(ordered) - 1)
        lo_i = int(math.floor(pos))
        hi_i = int(math.ceil(pos))
        if lo_i == hi_i:
            return ordered[lo_i]
        frac = pos - lo_i
        return ordered[lo_i] * (1 - frac) + ordered[hi_i] * frac

    return {
        "min": ordered[0],
        "q1": q(0.25),
        "median": q(0.5),
        "q3": q(0.75),
        "max": ordered[-1],
    }


# ---------------------------------------------------------------------------
# Classification performance
# ---------------------------------------------------------------------------


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when precision + recall is 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_report(counts: ClassificationCounts) -> PerformanceReport:
    """Precision/recall/F1 from raw counts.

    Degenerate denominators (no predicted positives, no actual positives)
    yield 0 for the affected metric and are flagged rather than raised, so
    aggregate reports over many labels never abort.
    """
    degenerate = set()
    predicted = counts.true_positives + counts.false_positives
    actual = counts.true_positives + counts.false_negatives
    if predicted == 0:
        precision = 0.0
        degenerate.add("precision")
    else:
        precision = counts.true_positives / predicted
    if actual == 0:
        recall = 0.0
        degenerate.add("recall")
    else:
        recall = counts.true_positives / actual
    return PerformanceReport(precision, recall, f1_score(precision, recall),
                             frozenset(degenerate))


# ---------------------------------------------------------------------------
# Approximation-model selection
# ---------------------------------------------------------------------------


def select_approximation_model(candidates: Mapping[str, Sequence[float]]) -> str:
    """Id of the candidate with the smallest mean prediction change.

    Ties break toward the lexicographically smallest id so selection is
    deterministic across runs.
    """
    if not candidates:
        raise NoCandidates("no candidate models supplied")
    best_id = None
    best_mean = None
    for model_id in sorted(candidates):
        mean = mean_change(candidates[model_id])
        if best_mean is None or mean < best_mean:
            best_id, best_mean = model_id, mean
    return best_id
