"""Dataset reference service: seeded synthetic groups and CutMix augmentation.

Groups are immutable once stored. Augmented groups always carry a link to
their parent, and a parent cannot be deleted while children exist. When a
storage path is configured, groups persist as a JSON manifest plus a
row-major float64 ``.npy`` stack (the lossless binary interchange variant).
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, DuplicateId, GroupHasChildren, UnknownGroup
from ..imaging import Image
from ..wire import content_hash


@dataclass(frozen=True, eq=False)
class Sample:
    sample_id: str
    image: Image
    label: str


@dataclass(frozen=True)
class AugmentationLink:
    parent_group_id: str
    method: str


@dataclass(frozen=True, eq=False)
class DatasetGroup:
    group_id: str
    name: str
    samples: tuple[Sample, ...]
    augmentation_of: AugmentationLink | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sample ids in group {self.group_id!r}")

    def to_payload(self) -> dict:
        link = None
        if self.augmentation_of is not None:
            link = {
                "parent_group_id": self.augmentation_of.parent_group_id,
                "method": self.augmentation_of.method,
            }
        return {
            "group_id": self.group_id,
            "name": self.name,
            "augmentation_of": link,
            "samples": [
                {"sample_id": s.sample_id, "label": s.label,
                 "image": s.image.to_payload()}
                for s in self.samples
            ],
        }

    def content_hash(self) -> str:
        return content_hash(self.to_payload())


@dataclass(frozen=True, eq=False)
class AugmentedSample:
    """A blended image with label weights that sum to 1."""

    image: Image
    label_weights: dict[str, float]

    def __post_init__(self):
        total = math.fsum(self.label_weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"label weights must sum to 1, got {total}")
        if any(w < 0.0 or w > 1.0 for w in self.label_weights.values()):
            raise ValueError("label weights must lie in [0, 1]")


def dominant_label(label_weights: dict[str, float]) -> str:
    """Highest-weight label; equal weights break toward the smaller label."""
    return sorted(label_weights.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


def label_pattern(label_index: int, height: int, width: int,
                  channels: int = 1) -> np.ndarray:
    """Deterministic per-label geometric pattern in [0.1, 0.9].

    Seed-free on purpose: the same pattern doubles as the class prototype
    for the reference classifier.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    phase = label_index + 1
    wave = np.sin(2.0 * np.pi * (phase * yy + (phase + 1) * xx) / max(height, width))
    plane = 0.5 + 0.4 * wave
    return np.repeat(plane[:, :, np.newaxis], channels, axis=2)


def generate_synthetic_dataset(labels: int, per_label: int, height: int,
                               width: int, seed: int, group_id: str | None = None,
                               name: str | None = None,
                               channels: int = 1) -> DatasetGroup:
    """Seeded, reproducible dataset: label patterns plus uniform noise.

    The same seed always yields bitwise-identical pixel data and sample ids.
    """
    if labels < 1 or per_label < 1 or height < 1 or width < 1:
        raise ValueError("labels, per_label and dimensions must all be >= 1")
    group_id = group_id or f"synthetic-seed{seed}"
    rng = np.random.default_rng(seed)
    samples = []
    for li in range(labels):
        base = label_pattern(li, height, width, channels)
        for i in range(per_label):
            noise = rng.uniform(-0.08, 0.08, size=base.shape)
            pixels = np.clip(base + noise, 0.0, 1.0)
            samples.append(Sample(f"{group_id}-l{li}-{i:02d}", Image(pixels),
                                  f"label-{li}"))
    return DatasetGroup(group_id, name or group_id, tuple(samples),
                        metadata={"seed": seed, "generator": "synthetic"})


# ---------------------------------------------------------------------------
# CutMix
# ---------------------------------------------------------------------------


def cutmix(a: tuple[Image, str], b: tuple[Image, str], lam: float,
           seed: int) -> AugmentedSample:
    """Paste a seeded rectangle of ``b`` into ``a``.

    Rectangle sides are round(dim * sqrt(1 - lam)); the top-left corner is
    drawn uniformly over valid positions (y first, then x). Label weights
    are {label_a: lam, label_b: 1 - lam}, merged when the labels coincide.
    """
    image_a, label_a = a
    image_b, label_b = b
    if image_a.pixels.shape != image_b.pixels.shape:
        raise DimensionMismatch(
            f"cutmix inputs must share dimensions, got {image_a.pixels.shape} "
            f"vs {image_b.pixels.shape}"
        )
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lambda must be in (0, 1), got {lam}")
    h, w = image_a.height, image_a.width
    cut_h = round(h * math.sqrt(1.0 - lam))
    cut_w = round(w * math.sqrt(1.0 - lam))
    pixels = np.array(image_a.pixels)
    if cut_h > 0 and cut_w > 0:
        rng = np.random.default_rng(seed)
        y0 = int(rng.integers(0, h - cut_h + 1))
        x0 = int(rng.integers(0, w - cut_w + 1))
        pixels[y0:y0 + cut_h, x0:x0 + cut_w, :] = \
            image_b.pixels[y0:y0 + cut_h, x0:x0 + cut_w, :]
    if label_a == label_b:
        weights = {label_a: 1.0}
    else:
        weights = {label_a: lam, label_b: 1.0 - lam}
    return AugmentedSample(Image(pixels), weights)


def draw_lambda(seed: int, lo: float = 0.2, hi: float = 0.8) -> float:
    """Seeded λ convenience; callers must record the drawn value."""
    return float(np.random.default_rng(seed).uniform(lo, hi))


# ---------------------------------------------------------------------------
# Group store
# ---------------------------------------------------------------------------


class DatasetStore:
    """Group registry: serialized writes, concurrent reads, optional disk copy."""

    def __init__(self, storage_path: str | Path | None = None):
        self._groups: dict[str, DatasetGroup] = {}
        self._lock = threading.RLock()
        self._root = Path(storage_path) / "datasets" if storage_path else None

    def add_group(self, group: DatasetGroup) -> DatasetGroup:
        with self._lock:
            if group.group_id in self._groups:
                raise DuplicateId(f"dataset group {group.group_id!r} already exists")
            if group.augmentation_of is not None:
                parent = group.augmentation_of.parent_group_id
                if parent not in self._groups:
                    raise UnknownGroup(f"parent group {parent!r} not found")
            self._groups[group.group_id] = group
            if self._root is not None:
                save_group_binary(group, self._root)
            return group

    def get_group(self, group_id: str) -> DatasetGroup:
        with self._lock:
            try:
                return self._groups[group_id]
            except KeyError:
                raise UnknownGroup(f"dataset group {group_id!r} not found") from None

    def list_groups(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "group_id": g.group_id,
                    "name": g.name,
                    "sample_count": len(g.samples),
                    "augmentation_of": g.augmentation_of.parent_group_id
                    if g.augmentation_of else None,
                }
                for g in self._groups.values()
            ]

    def children_of(self, group_id: str) -> list[str]:
        with self._lock:
            return [
                g.group_id for g in self._groups.values()
                if g.augmentation_of is not None
                and g.augmentation_of.parent_group_id == group_id
            ]

    def delete_group(self, group_id: str) -> None:
        with self._lock:
            if group_id not in self._groups:
                raise UnknownGroup(f"dataset group {group_id!r} not found")
            children = self.children_of(group_id)
            if children:
                raise GroupHasChildren(
                    f"group {group_id!r} has derived groups {children}; "
                    "delete them first"
                )
            del self._groups[group_id]

    def augment_with_cutmix(self, parent_id: str, new_group_id: str, lam: float,
                            seed: int, name: str | None = None) -> DatasetGroup:
        """CutMix every sample with a seeded partner at a fixed shift.

        Per-sample rectangle seeds are ``seed + 1 + index`` so an oracle can
        recompute every pixel. New samples take the dominant label; the full
        weights are kept in the group metadata.
        """
        parent = self.get_group(parent_id)
        n = len(parent.samples)
        rng = np.random.default_rng(seed)
        shift = 1 + int(rng.integers(0, n - 1)) if n > 1 else 0
        samples = []
        weights_by_id = {}
        for i, sample in enumerate(parent.samples):
            partner = parent.samples[(i + shift) % n]
            mixed = cutmix((sample.image, sample.label),
                           (partner.image, partner.label), lam, seed + 1 + i)
            sid = f"{new_group_id}-{i:02d}"
            samples.append(Sample(sid, mixed.image,
                                  dominant_label(mixed.label_weights)))
            weights_by_id[sid] = dict(mixed.label_weights)
        group = DatasetGroup(
            new_group_id, name or new_group_id, tuple(samples),
            augmentation_of=AugmentationLink(parent_id, "cutmix"),
            metadata={"method": "cutmix", "lambda": lam, "seed": seed,
                      "shift": shift, "label_weights": weights_by_id},
        )
        return self.add_group(group)


# ---------------------------------------------------------------------------
# Binary persistence
# ---------------------------------------------------------------------------


def save_group_binary(group: DatasetGroup, root: Path) -> Path:
    """Manifest JSON plus one row-major float64 (N, H, W, C) .npy stack."""
    out = root / group.group_id
    out.mkdir(parents=True, exist_ok=True)
    stack = np.stack([s.image.pixels for s in group.samples])
    np.save(out / "images.npy", stack)
    manifest = {
        "group_id": group.group_id,
        "name": group.name,
        "augmentation_of": None if group.augmentation_of is None else {
            "parent_group_id": group.augmentation_of.parent_group_id,
            "method": group.augmentation_of.method,
        },
        "metadata": group.metadata,
        "samples": [{"sample_id": s.sample_id, "label": s.label}
                    for s in group.samples],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


def load_group_binary(path: Path) -> DatasetGroup:
    manifest = json.loads((Path(path) / "manifest.json").read_text())
    stack = np.load(Path(path) / "images.npy")
    samples = tuple(
        Sample(entry["sample_id"], Image(stack[i]), entry["label"])
        for i, entry in enumerate(manifest["samples"])
    )
    link = manifest.get("augmentation_of")
    return DatasetGroup(
        manifest["group_id"], manifest["name"], samples,
        augmentation_of=AugmentationLink(link["parent_group_id"], link["method"])
        if link else None,
        metadata=manifest.get("metadata", {}),
    )
