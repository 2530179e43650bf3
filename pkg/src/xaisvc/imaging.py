"""Pixel-level domain types and their JSON tensor wire format.

Images travel on the open API as dims plus a flat row-major pixel list;
local dataset storage uses a lossless row-major float64 binary (.npy).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, SchemaViolation


@dataclass(frozen=True, eq=False)
class Image:
    """Grayscale (1) or RGB (3) image, float64 pixels in [0, 1], row-major."""

    pixels: np.ndarray  # shape (H, W, C)

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionMismatch(
                f"image must be (H, W, C) with C in (1, 3), got shape {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"image dims must be positive, got {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def to_payload(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "pixels": [float(v) for v in self.pixels.ravel()],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Image":
        h, w, c = _dims(payload, ("height", "width", "channels"))
        flat = _flat(payload, "pixels", h * w * c)
        return cls(np.array(flat, dtype=np.float64).reshape(h, w, c))


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Per-pixel nonnegative scores normalized so max is 1 unless all zero."""

    scores: np.ndarray  # shape (H, W)

    def __post_init__(self):
        arr = np.array(self.scores, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"saliency map must be 2-D, got shape {arr.shape}")
        if arr.size and arr.min() < 0.0:
            raise ValueError("saliency scores must be nonnegative")
        top = arr.max() if arr.size else 0.0
        if top != 0.0 and abs(top - 1.0) > 1e-9:
            raise ValueError(f"saliency map must be normalized (max 1), got max {top}")
        arr.flags.writeable = False
        object.__setattr__(self, "scores", arr)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    def to_payload(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "scores": [float(v) for v in self.scores.ravel()],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SaliencyMap":
        h, w = _dims(payload, ("height", "width"))
        flat = _flat(payload, "scores", h * w)
        return cls(np.array(flat, dtype=np.float64).reshape(h, w))


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean keep-grid; True marks pixels retained by the masking step."""

    keep: np.ndarray  # shape (H, W), bool

    def __post_init__(self):
        arr = np.array(self.keep, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"mask must be 2-D, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "keep", arr)

    @property
    def height(self) -> int:
        return self.keep.shape[0]

    @property
    def width(self) -> int:
        return self.keep.shape[1]

    @property
    def kept_count(self) -> int:
        return int(self.keep.sum())

    def to_payload(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "keep": [bool(v) for v in self.keep.ravel()],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Mask":
        h, w = _dims(payload, ("height", "width"))
        flat = _flat(payload, "keep", h * w)
        return cls(np.array(flat, dtype=bool).reshape(h, w))


@dataclass(frozen=True, eq=False)
class MaskedImage:
    """An image whose non-kept pixels equal the fill value, plus provenance."""

    image: Image
    source_id: str = ""
    mask_params: dict = field(default_factory=dict)


def _dims(payload: dict, keys: tuple[str, ...]) -> tuple[int, ...]:
    dims = []
    for key in keys:
        value = payload.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise SchemaViolation(f"tensor field {key!r} must be a positive integer")
        dims.append(value)
    return tuple(dims)


def _flat(payload: dict, key: str, expected: int) -> list:
    values = payload.get(key)
    if not isinstance(values, list):
        raise SchemaViolation(f"tensor field {key!r} must be a list")
    if len(values) != expected:
        raise SchemaViolation(
            f"tensor field {key!r} has {len(values)} entries, expected {expected}"
        )
    return values
