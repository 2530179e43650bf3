"""Saliency maps, top-feature masks, and the reference occlusion method.

The masking convention KEEPS the top-q salient pixels and fills the rest:
a faithful explanation leaves the prediction nearly unchanged when only the
important features remain, so a small prediction change is the success
signal. q and fill are task parameters recorded in provenance; defaults are
q=0.5 and fill=0 (black).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidFraction, ModelFailure, NegativeScore
from .imaging import Image, Mask, MaskedImage, SaliencyMap

DEFAULT_KEEP_FRACTION = 0.5
DEFAULT_FILL = 0.0

PredictFn = Callable[[Image], float]


def normalize_saliency(raw: Sequence | np.ndarray) -> SaliencyMap:
    """Divide by the max score; an all-zero grid stays all-zero."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"raw saliency must be 2-D, got shape {arr.shape}")
    if arr.size and arr.min() < 0.0:
        raise NegativeScore("raw saliency scores must be nonnegative")
    top = arr.max() if arr.size else 0.0
    if top > 0.0:
        arr = arr / top
    return SaliencyMap(arr)


def keep_count(q: float, height: int, width: int) -> int:
    """Number of pixels a keep-fraction q retains: ceil(q * H * W), capped."""
    if not (0.0 < q <= 1.0):
        raise InvalidFraction(f"keep fraction must be in (0, 1], got {q}")
    return min(math.ceil(q * height * width), height * width)


def threshold_mask(saliency: SaliencyMap, q: float) -> Mask:
    """Keep exactly ceil(q*H*W) highest-scoring pixels.

    Ties break by row-major order: earlier pixels win. A stable argsort on
    the negated scores realizes exactly that rule.
    """
    k = keep_count(q, saliency.height, saliency.width)
    flat = saliency.scores.ravel()
    order = np.argsort(-flat, kind="stable")
    keep = np.zeros(flat.shape[0], dtype=bool)
    keep[order[:k]] = True
    return Mask(keep.reshape(saliency.height, saliency.width))


def apply_mask(image: Image, mask: Mask, fill: float = DEFAULT_FILL,
               source_id: str = "", mask_params: dict | None = None) -> MaskedImage:
    """Copy kept pixels verbatim; set all channels of the rest to ``fill``."""
    if (image.height, image.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"mask {mask.height}x{mask.width} does not match "
            f"image {image.height}x{image.width}"
        )
    if not (0.0 <= fill <= 1.0):
        raise ValueError(f"fill must be in [0, 1], got {fill}")
    out = np.where(mask.keep[:, :, np.newaxis], image.pixels, fill)
    return MaskedImage(Image(out), source_id=source_id,
                       mask_params=dict(mask_params or {}))


# ---------------------------------------------------------------------------
# Occlusion saliency
# ---------------------------------------------------------------------------


def iter_placements(height: int, width: int, window: int, stride: int):
    """Window top-left corners at stride multiples, window clamped to fit.

    A window at least as large as the image yields the single full-cover
    placement. With stride > window some pixels may be uncovered; they score
    0 (no occlusion evidence).
    """
    wh = min(window, height)
    ww = min(window, width)
    for y in range(0, height - wh + 1, stride):
        for x in range(0, width - ww + 1, stride):
            yield y, x, wh, ww


def occlusion_saliency(model: PredictFn, image: Image, window: int = 1,
                       stride: int = 1, fill: float = DEFAULT_FILL,
                       workers: int = 1) -> SaliencyMap:
    """Model-agnostic attribution by sliding-window occlusion.

    Each placement scores max(0, original - occluded) — occlusions that
    raise confidence contribute no saliency, keeping the map nonnegative.
    Per-pixel score is the mean over covering windows, then the map is
    normalized. Placement order is fixed, so results are bitwise-identical
    regardless of ``workers`` (the model callable must be reentrant for
    workers > 1).
    """
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be >= 1, got {window}, {stride}")
    base = _predict(model, image, placement=None)
    placements = list(iter_placements(image.height, image.width, window, stride))

    def occluded_confidence(indexed) -> float:
        idx, (y, x, wh, ww) = indexed
        occluded = np.array(image.pixels)
        occluded[y:y + wh, x:x + ww, :] = fill
        return _predict(model, Image(occluded), placement=idx)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            confidences = list(pool.map(occluded_confidence, enumerate(placements)))
    else:
        confidences = [occluded_confidence(item) for item in enumerate(placements)]

    drops = np.zeros((image.height, image.width), dtype=np.float64)
    cover = np.zeros((image.height, image.width), dtype=np.float64)
    for (y, x, wh, ww), confidence in zip(placements, confidences):
        drops[y:y + wh, x:x + ww] += max(0.0, base - confidence)
        cover[y:y + wh, x:x + ww] += 1.0
    raw = np.divide(drops, cover, out=np.zeros_like(drops), where=cover > 0)
    return normalize_saliency(raw)


def _predict(model: PredictFn, image: Image, placement: int | None) -> float:
    try:
        return float(model(image))
    except ModelFailure:
        raise
    except Exception as exc:
        where = "baseline call" if placement is None else f"placement {placement}"
        raise ModelFailure(f"model failed on {where}: {exc}",
                           placement=placement) from exc


# ---------------------------------------------------------------------------
# Analytic linear model (oracle for occlusion tests and demos)
# ---------------------------------------------------------------------------

LINEAR_GAIN = 0.1
LINEAR_BIAS = 0.5


def linear_predict(weights: Sequence | np.ndarray, image: Image,
                   gain: float = LINEAR_GAIN, bias: float = LINEAR_BIAS) -> float:
    """Confidence clamp01(bias + gain * Σ w⊙x), deterministic.

    Weights are per-pixel; multi-channel pixels enter as their channel mean.
    The affine squash keeps the output a valid confidence while preserving
    per-pixel contribution ranking as long as no clamping occurs.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (image.height, image.width):
        raise DimensionMismatch(
            f"weights shape {w.shape} does not match image "
            f"{image.height}x{image.width}"
        )
    dot = float((w * image.pixels.mean(axis=2)).sum())
    return min(1.0, max(0.0, bias + gain * dot))


@dataclass(frozen=True, eq=False)
class LinearModel:
    """linear_predict bound to fixed weights and squash parameters."""

    weights: np.ndarray
    gain: float = LINEAR_GAIN
    bias: float = LINEAR_BIAS

    def __call__(self, image: Image) -> float:
        return linear_predict(self.weights, image, gain=self.gain, bias=self.bias)
