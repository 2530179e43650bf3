"""Evaluation reference service: turns an explanation set into the open-API
consistency report (stability, histogram, exceedance fraction, mean, and a
violin-ready five-number summary)."""

from __future__ import annotations

from ..errors import EmptyInput
from .. import metrics


def build_report(method_id: str, records: list[dict], *, bins: int = 50,
                 value_range: tuple[float, float] = (0.0, 1.0),
                 threshold: float = 0.5,
                 distance: str = "abs_delta") -> dict:
    """Evaluation report over per-sample explanation records.

    Records need sample_id/original/masked/delta fields. Stability requires
    at least two records; with fewer it is marked unavailable while every
    other statistic is still emitted.
    """
    if not records:
        raise EmptyInput("evaluation needs at least one explanation")
    explanations = tuple(
        metrics.Explanation(r["sample_id"], method_id,
                            float(r["original"]), float(r["masked"]),
                            float(r["delta"]))
        for r in records
    )
    explanation_set = metrics.ExplanationSet(method_id, explanations)
    deltas = explanation_set.deltas

    if explanation_set.m >= 2:
        result = metrics.stability(explanation_set, distance)
        stability_section = {
            "available": True,
            "mean_pairwise_distance": float(result.mean_pairwise_distance),
            "pair_count": result.pair_count,
            "m": result.m,
            "distance": distance,
        }
    else:
        stability_section = {
            "available": False,
            "reason": f"stability needs at least 2 explanations, got {explanation_set.m}",
        }

    hist = metrics.histogram(deltas, bins=bins, value_range=value_range)
    return {
        "method_id": method_id,
        "m": explanation_set.m,
        "mean_change": float(metrics.mean_change(deltas)),
        "fraction_exceeding": {
            "threshold": float(threshold),
            "value": float(metrics.fraction_exceeding(deltas, threshold)),
        },
        "histogram": {
            "bin_edges": [float(e) for e in hist.bin_edges],
            "counts": list(hist.counts),
            "total": hist.total,
        },
        "delta_summary": {k: float(v)
                          for k, v in metrics.quartile_summary(deltas).items()},
        "stability": stability_section,
    }
