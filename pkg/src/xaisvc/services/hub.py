"""Wire-level handlers for the built-in reference services.

The hub speaks exactly the downstream open-API payloads (predict / explain /
samples / augment / evaluate) whether reached in-process through the gateway
(``builtin:`` endpoints) or over HTTP via the server mounts, so external
services can be validated against the same contract.
"""

from __future__ import annotations

import threading

from .. import __about__
from ..errors import SchemaViolation, UnknownService
from ..imaging import Image
from ..saliency import (
    DEFAULT_FILL,
    DEFAULT_KEEP_FRACTION,
    occlusion_saliency,
    threshold_mask,
)
from .datasets import DatasetStore, draw_lambda
from .evaluation import build_report


class ReferenceHub:
    """Holds the reference dataset store, models, and XAI method registry."""

    def __init__(self, dataset_store: DatasetStore | None = None):
        self.datasets = dataset_store or DatasetStore()
        self._models: dict[str, object] = {}
        self._xai_methods: dict[str, dict] = {}
        self._gateway = None
        self._lock = threading.RLock()

    def bind_gateway(self, gateway) -> None:
        self._gateway = gateway

    def add_model(self, model_id: str, predictor) -> str:
        """Predictor contract: predict(Image) -> (label, confidence, distribution)."""
        with self._lock:
            self._models[model_id] = predictor
        return model_id

    def add_xai_method(self, method_id: str, **default_params) -> str:
        with self._lock:
            self._xai_methods[method_id] = dict(default_params)
        return method_id

    def model_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._models)

    def xai_method_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._xai_methods)

    # -- downstream wire handlers ------------------------------------------

    def handle_predict(self, model_id: str, body: dict) -> dict:
        predictor = self._get_model(model_id)
        image = Image.from_payload(_require(body, "image", dict))
        label, confidence, distribution = predictor.predict(image)
        return {
            "label": label,
            "confidence": float(confidence),
            "distribution": {k: float(v) for k, v in distribution.items()},
        }

    def handle_explain(self, method_id: str, body: dict) -> dict:
        defaults = self._get_xai_defaults(method_id)
        if self._gateway is None:
            raise RuntimeError("hub has no gateway bound; cannot reach models")
        image = Image.from_payload(_require(body, "image", dict))
        model_endpoint = _require(body, "model_endpoint", str)
        params = {**defaults, **(body.get("params") or {})}
        window = int(params.get("window", 1))
        stride = int(params.get("stride", 1))
        fill = float(params.get("fill", DEFAULT_FILL))
        q = float(params.get("q", DEFAULT_KEEP_FRACTION))
        if window < 1 or stride < 1:
            raise SchemaViolation("window and stride must be >= 1")
        if not 0.0 <= fill <= 1.0:
            raise SchemaViolation("fill must lie in [0, 1]")
        if not 0.0 < q <= 1.0:
            raise SchemaViolation("q must lie in (0, 1]")

        def predict(img: Image) -> float:
            response = self._gateway.post(f"{model_endpoint}/predict",
                                          {"image": img.to_payload()})
            return float(response["confidence"])

        saliency = occlusion_saliency(predict, image, window=window,
                                      stride=stride, fill=fill)
        mask = threshold_mask(saliency, q)
        return {
            "saliency": saliency.to_payload(),
            "mask": mask.to_payload(),
            "method": {"name": method_id, "version": __about__.__version__},
        }

    def handle_samples(self, group_id: str) -> dict:
        return self.datasets.get_group(group_id).to_payload()

    def handle_augment(self, group_id: str, body: dict) -> dict:
        method = body.get("method", "cutmix")
        if method != "cutmix":
            raise SchemaViolation(f"unsupported augmentation method {method!r}")
        params = body.get("params") or {}
        new_group_id = _require(params, "new_group_id", str)
        seed = int(_require(params, "seed", int))
        lam = params.get("lambda")
        if lam is None:
            # convenience draw; the value is recorded so reruns stay exact
            lam = draw_lambda(seed)
        group = self.datasets.augment_with_cutmix(group_id, new_group_id,
                                                  float(lam), seed,
                                                  name=params.get("name"))
        return {
            "group_id": group.group_id,
            "parent_group_id": group_id,
            "method": "cutmix",
            "lambda": float(lam),
            "seed": seed,
            "sample_count": len(group.samples),
        }

    def handle_evaluate(self, body: dict) -> dict:
        explanations = _require(body, "explanations", dict)
        method_id = _require(explanations, "method_id", str)
        records = _require(explanations, "explanations", list)
        options = body.get("options") or {}
        value_range = options.get("range", (0.0, 1.0))
        return build_report(
            method_id, records,
            bins=int(options.get("bins", 50)),
            value_range=(float(value_range[0]), float(value_range[1])),
            threshold=float(options.get("threshold", 0.5)),
            distance=options.get("distance", "abs_delta"),
        )

    # -- helpers ---------------------------------------------------------------

    def _get_model(self, model_id: str):
        with self._lock:
            try:
                return self._models[model_id]
            except KeyError:
                raise UnknownService(f"no built-in model {model_id!r}") from None

    def _get_xai_defaults(self, method_id: str) -> dict:
        with self._lock:
            try:
                return dict(self._xai_methods[method_id])
            except KeyError:
                raise UnknownService(f"no built-in XAI method {method_id!r}") from None


def _require(body: dict, key: str, kind) -> object:
    value = body.get(key)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaViolation(f"request field {key!r} must be an integer")
        return value
    if not isinstance(value, kind):
        raise SchemaViolation(
            f"request field {key!r} must be {kind.__name__}, got "
            f"{type(value).__name__}"
        )
    return value
