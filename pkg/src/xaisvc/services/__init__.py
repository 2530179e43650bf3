"""Deterministic in-process reference implementations of the four
microservice kinds (dataset, AI model, XAI method, evaluation), exposed
through the same open-API contract external services must meet."""

from .datasets import (
    AugmentedSample,
    DatasetGroup,
    DatasetStore,
    Sample,
    cutmix,
    dominant_label,
    generate_synthetic_dataset,
)
from .evaluation import build_report
from .hub import ReferenceHub
from .models import PrototypeModel, build_prototype_model

__all__ = [
    "AugmentedSample",
    "DatasetGroup",
    "DatasetStore",
    "Sample",
    "cutmix",
    "dominant_label",
    "generate_synthetic_dataset",
    "build_report",
    "ReferenceHub",
    "PrototypeModel",
    "build_prototype_model",
]
