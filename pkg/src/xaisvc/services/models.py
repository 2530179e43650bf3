"""Reference AI-model service: deterministic stand-ins for cloud classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch
from ..imaging import Image
from ..saliency import LINEAR_BIAS, LINEAR_GAIN, linear_predict
from .datasets import label_pattern


@dataclass(frozen=True, eq=False)
class PrototypeModel:
    """Nearest-prototype classifier with a temperature softmax.

    Similarity to each prototype is the negative mean squared distance;
    probabilities are softmax(similarity / temperature). Mean squared
    distance (not cosine) keeps an exact closed-form oracle.
    """

    prototypes: dict[str, Image]
    temperature: float = 0.02

    def __post_init__(self):
        if not self.prototypes:
            raise ValueError("prototype model needs at least one prototype")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        shapes = {img.pixels.shape for img in self.prototypes.values()}
        if len(shapes) != 1:
            raise DimensionMismatch(f"prototypes disagree on shape: {shapes}")

    def predict(self, image: Image) -> tuple[str, float, dict[str, float]]:
        labels = sorted(self.prototypes)
        proto_shape = self.prototypes[labels[0]].pixels.shape
        if image.pixels.shape != proto_shape:
            raise DimensionMismatch(
                f"image shape {image.pixels.shape} does not match "
                f"prototype shape {proto_shape}"
            )
        logits = np.array([
            -float(np.mean((image.pixels - self.prototypes[lab].pixels) ** 2))
            / self.temperature
            for lab in labels
        ])
        stable = np.exp(logits - logits.max())
        probs = stable / stable.sum()
        best = int(np.argmax(probs))  # sorted labels: ties fall to the smaller
        distribution = {lab: float(p) for lab, p in zip(labels, probs)}
        return labels[best], float(probs[best]), distribution


def build_prototype_model(labels: int, height: int, width: int,
                          channels: int = 1,
                          temperature: float = 0.02) -> PrototypeModel:
    """Prototype per label = the noise-free synthetic pattern, so the model
    classifies the seeded synthetic datasets correctly by construction."""
    prototypes = {
        f"label-{i}": Image(label_pattern(i, height, width, channels))
        for i in range(labels)
    }
    return PrototypeModel(prototypes, temperature)


@dataclass(frozen=True, eq=False)
class LinearScorer:
    """Analytic linear model behind the /predict contract.

    Emits a fixed two-entry distribution {label: p, other: 1-p}; the squash
    parameters are part of the model configuration.
    """

    weights: np.ndarray
    gain: float = LINEAR_GAIN
    bias: float = LINEAR_BIAS
    label: str = "object"
    other: str = "background"

    def predict(self, image: Image) -> tuple[str, float, dict[str, float]]:
        p = linear_predict(self.weights, image, gain=self.gain, bias=self.bias)
        return self.label, p, {self.label: p, self.other: 1.0 - p}
