"""Reference services: synthetic datasets, CutMix, prototype models, and the
built-in explain/evaluate handlers behind the downstream wire contract."""

import math

import numpy as np
import pytest

from xaisvc.center.gateway import ServiceGateway
from xaisvc.errors import (
    DimensionMismatch,
    EmptyInput,
    GroupHasChildren,
    SchemaViolation,
    UnknownGroup,
)
from xaisvc.imaging import Image
from xaisvc.services import (
    DatasetStore,
    PrototypeModel,
    ReferenceHub,
    cutmix,
    dominant_label,
    generate_synthetic_dataset,
)
from xaisvc.services.datasets import load_group_binary, save_group_binary
from xaisvc.services.models import build_prototype_model


# ---------------------------------------------------------------------------
# synthetic datasets
# ---------------------------------------------------------------------------


class TestSyntheticDataset:
    def test_cardinality_and_ids(self):
        group = generate_synthetic_dataset(2, 3, 8, 8, seed=7, group_id="g")
        assert len(group.samples) == 6
        assert [s.sample_id for s in group.samples] == [
            "g-l0-00", "g-l0-01", "g-l0-02", "g-l1-00", "g-l1-01", "g-l1-02"]
        assert {s.label for s in group.samples} == {"label-0", "label-1"}

    def test_same_seed_bitwise_identical(self):
        a = generate_synthetic_dataset(2, 3, 8, 8, seed=7)
        b = generate_synthetic_dataset(2, 3, 8, 8, seed=7)
        for sa, sb in zip(a.samples, b.samples):
            assert sa.image.pixels.tobytes() == sb.image.pixels.tobytes()
        assert a.content_hash() == b.content_hash()

    def test_different_seeds_differ(self):
        a = generate_synthetic_dataset(2, 3, 8, 8, seed=7)
        b = generate_synthetic_dataset(2, 3, 8, 8, seed=8)
        # oracle: full pixel comparison finds at least one differing pixel
        different = False
        for sa, sb in zip(a.samples, b.samples):
            if not np.array_equal(sa.image.pixels, sb.image.pixels):
                different = True
        assert different

    def test_pixels_in_range(self):
        group = generate_synthetic_dataset(3, 2, 5, 9, seed=11)
        for s in group.samples:
            assert s.image.pixels.min() >= 0.0
            assert s.image.pixels.max() <= 1.0


# ---------------------------------------------------------------------------
# cutmix
# ---------------------------------------------------------------------------


def noisy_image(seed, h=8, w=8):
    return Image(np.random.default_rng(seed).uniform(0, 1, size=(h, w, 1)))


class TestCutmix:
    def test_near_one_lambda_is_empty_cut(self):
        a, b = noisy_image(1), noisy_image(2)
        lam = 0.999  # rectangle rounds to 0x0
        out = cutmix((a, "x"), (b, "y"), lam, seed=3)
        assert np.array_equal(out.image.pixels, a.pixels)
        assert out.label_weights == {"x": lam, "y": pytest.approx(1 - lam)}

    def test_rectangle_size_arithmetic(self):
        # lam=0.75 on 8x8: sides are round(8 * sqrt(0.25)) = 4
        a, b = noisy_image(4), noisy_image(5)
        out = cutmix((a, "x"), (b, "y"), 0.75, seed=123)
        from_b = ~np.isclose(out.image.pixels, a.pixels)
        assert from_b.sum() == 16  # 4x4 patch, one channel

    def test_every_pixel_matches_recomputed_rectangle(self):
        rng = np.random.default_rng(40)
        for trial in range(20):
            h, w = int(rng.integers(2, 10)), int(rng.integers(2, 10))
            a = Image(rng.uniform(0, 1, size=(h, w, 1)))
            b = Image(rng.uniform(0, 1, size=(h, w, 1)))
            lam = float(rng.uniform(0.05, 0.95))
            seed = int(rng.integers(0, 10_000))
            out = cutmix((a, "x"), (b, "y"), lam, seed)
            # oracle: recompute the rectangle from the seed, compare per pixel
            cut_h = round(h * math.sqrt(1 - lam))
            cut_w = round(w * math.sqrt(1 - lam))
            if cut_h > 0 and cut_w > 0:
                r = np.random.default_rng(seed)
                y0 = int(r.integers(0, h - cut_h + 1))
                x0 = int(r.integers(0, w - cut_w + 1))
            else:
                y0 = x0 = 0
            for y in range(h):
                for x in range(w):
                    inside = (cut_h > 0 and cut_w > 0
                              and y0 <= y < y0 + cut_h and x0 <= x < x0 + cut_w)
                    source = b if inside else a
                    assert out.image.pixels[y, x, 0] == source.pixels[y, x, 0]

    def test_rectangle_inside_bounds_and_weights_sum(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            a, b = noisy_image(int(rng.integers(1e6))), \
                noisy_image(int(rng.integers(1e6)))
            lam = float(rng.uniform(0.05, 0.95))
            out = cutmix((a, "x"), (b, "y"), lam, int(rng.integers(1e6)))
            assert math.fsum(out.label_weights.values()) == pytest.approx(1.0)
            assert out.image.pixels.shape == a.pixels.shape

    def test_equal_labels_merge(self):
        a, b = noisy_image(6), noisy_image(7)
        out = cutmix((a, "x"), (b, "x"), 0.5, seed=1)
        assert out.label_weights == {"x": 1.0}

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cutmix((noisy_image(1, 4, 4), "x"), (noisy_image(2, 5, 5), "y"),
                   0.5, 0)

    def test_dominant_label_tie_break(self):
        assert dominant_label({"b": 0.5, "a": 0.5}) == "a"
        assert dominant_label({"a": 0.25, "b": 0.75}) == "b"


# ---------------------------------------------------------------------------
# dataset store
# ---------------------------------------------------------------------------


class TestDatasetStore:
    def test_parent_link_and_delete_protection(self):
        store = DatasetStore()
        store.add_group(generate_synthetic_dataset(2, 2, 4, 4, seed=1,
                                                   group_id="parent"))
        child = store.augment_with_cutmix("parent", "child", lam=0.75, seed=2)
        assert child.augmentation_of.parent_group_id == "parent"
        with pytest.raises(GroupHasChildren):
            store.delete_group("parent")
        store.delete_group("child")
        store.delete_group("parent")
        with pytest.raises(UnknownGroup):
            store.get_group("parent")

    def test_augmented_samples_deterministic(self):
        store = DatasetStore()
        store.add_group(generate_synthetic_dataset(2, 3, 6, 6, seed=3,
                                                   group_id="p"))
        a = store.augment_with_cutmix("p", "c1", lam=0.6, seed=9)
        other = DatasetStore()
        other.add_group(generate_synthetic_dataset(2, 3, 6, 6, seed=3,
                                                   group_id="p"))
        b = other.augment_with_cutmix("p", "c1", lam=0.6, seed=9)
        assert a.content_hash() == b.content_hash()

    def test_label_weights_recorded(self):
        store = DatasetStore()
        store.add_group(generate_synthetic_dataset(2, 2, 4, 4, seed=5,
                                                   group_id="p"))
        child = store.augment_with_cutmix("p", "c", lam=0.7, seed=6)
        weights = child.metadata["label_weights"]
        assert set(weights) == {s.sample_id for s in child.samples}
        for sid, w in weights.items():
            assert math.fsum(w.values()) == pytest.approx(1.0)

    def test_binary_roundtrip(self, tmp_path):
        group = generate_synthetic_dataset(2, 2, 5, 5, seed=13, group_id="bin")
        out = save_group_binary(group, tmp_path)
        restored = load_group_binary(out)
        assert restored.content_hash() == group.content_hash()
        assert restored.metadata == group.metadata


# ---------------------------------------------------------------------------
# prototype model
# ---------------------------------------------------------------------------


class TestPrototypeModel:
    def test_exact_prototype_wins(self):
        model = build_prototype_model(3, 6, 6)
        for label, proto in model.prototypes.items():
            got_label, confidence, _ = model.predict(proto)
            assert got_label == label
            assert confidence > 0.5

    def test_equidistant_two_labels(self):
        proto_a = Image(np.zeros((2, 2, 1)))
        proto_b = Image(np.ones((2, 2, 1)))
        model = PrototypeModel({"a": proto_a, "b": proto_b}, temperature=0.1)
        _, confidence, dist = model.predict(Image(np.full((2, 2, 1), 0.5)))
        assert dist["a"] == 0.5
        assert dist["b"] == 0.5
        assert confidence == 0.5

    def test_distribution_matches_naive_softmax_oracle(self):
        rng = np.random.default_rng(50)
        model = build_prototype_model(3, 5, 5, temperature=0.03)
        for _ in range(20):
            image = Image(rng.uniform(0, 1, size=(5, 5, 1)))
            _, _, dist = model.predict(image)
            assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-12)
            # oracle: direct softmax formula over -mse/temperature logits
            labels = sorted(model.prototypes)
            logits = [
                -float(np.mean((image.pixels
                                - model.prototypes[lab].pixels) ** 2)) / 0.03
                for lab in labels
            ]
            denominator = math.fsum(math.exp(l - max(logits)) for l in logits)
            for lab, logit in zip(labels, logits):
                expected = math.exp(logit - max(logits)) / denominator
                assert dist[lab] == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        model = build_prototype_model(2, 4, 4)
        with pytest.raises(DimensionMismatch):
            model.predict(Image(np.zeros((5, 5, 1))))

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            PrototypeModel({"a": Image(np.zeros((2, 2, 1)))}, temperature=0.0)


# ---------------------------------------------------------------------------
# hub handlers (the downstream wire contract, in-process)
# ---------------------------------------------------------------------------


@pytest.fixture
def hub():
    h = ReferenceHub()
    h.bind_gateway(ServiceGateway(hub=h))
    h.datasets.add_group(generate_synthetic_dataset(2, 2, 6, 6, seed=7,
                                                    group_id="g"))
    h.add_model("m", build_prototype_model(2, 6, 6))
    h.add_xai_method("occlusion")
    return h


class TestHubHandlers:
    def test_explain_q1_keeps_everything(self, hub):
        sample = hub.handle_samples("g")["samples"][0]
        out = hub.handle_explain("occlusion", {
            "image": sample["image"], "model_endpoint": "builtin:models/m",
            "params": {"window": 1, "stride": 1, "fill": 0.0, "q": 1.0}})
        assert all(out["mask"]["keep"])
        assert out["method"]["name"] == "occlusion"

    def test_explain_constant_model_tie_rule(self, hub):
        hub.add_model("const", _ConstantModel())
        sample = hub.handle_samples("g")["samples"][0]
        out = hub.handle_explain("occlusion", {
            "image": sample["image"], "model_endpoint": "builtin:models/const",
            "params": {"window": 1, "stride": 1, "fill": 0.0, "q": 0.25}})
        assert max(out["saliency"]["scores"]) == 0.0
        keep = out["mask"]["keep"]
        expected = math.ceil(0.25 * 36)
        assert keep[:expected] == [True] * expected
        assert not any(keep[expected:])

    def test_explain_matches_analytic_ranking(self, hub):
        from xaisvc.services.models import LinearScorer
        weights = np.random.default_rng(51).permutation(
            np.arange(1.0, 37.0)).reshape(6, 6)
        hub.add_model("lin", LinearScorer(weights, gain=0.4 / weights.sum()))
        image = Image(np.ones((6, 6, 1)))
        out = hub.handle_explain("occlusion", {
            "image": image.to_payload(), "model_endpoint": "builtin:models/lin",
            "params": {"window": 1, "stride": 1, "fill": 0.0, "q": 0.5}})
        scores = np.array(out["saliency"]["scores"]).reshape(6, 6)
        got = list(np.argsort(-scores.ravel(), kind="stable"))
        expected = list(np.argsort(-weights.ravel(), kind="stable"))
        assert got == expected

    def test_evaluate_composition_example(self, hub):
        records = [
            {"sample_id": "a", "original": 0.4, "masked": 0.4 * 1.1,
             "delta": 0.1},
            {"sample_id": "b", "original": 0.4, "masked": 0.4 * 1.2,
             "delta": 0.2},
            {"sample_id": "c", "original": 0.4, "masked": 0.4 * 1.4,
             "delta": 0.4},
        ]
        # recompute deltas exactly as stored confidences imply
        for r in records:
            r["delta"] = abs(r["masked"] - r["original"]) / r["original"]
        report = hub.handle_evaluate({
            "explanations": {"method_id": "m", "explanations": records},
            "options": {"threshold": 0.5}})
        assert report["stability"]["mean_pairwise_distance"] == \
            pytest.approx(0.2, abs=1e-12)
        assert report["mean_change"] == pytest.approx((0.1 + 0.2 + 0.4) / 3,
                                                      abs=1e-9)
        assert report["fraction_exceeding"]["value"] == 0.0
        assert report["histogram"]["total"] == 3
        assert len(report["histogram"]["counts"]) == 50

    def test_evaluate_single_sample_marks_stability_unavailable(self, hub):
        report = hub.handle_evaluate({
            "explanations": {"method_id": "m", "explanations": [
                {"sample_id": "a", "original": 0.5, "masked": 0.4,
                 "delta": 0.19999999999999998}]},
            "options": {}})
        assert report["stability"]["available"] is False
        assert report["m"] == 1
        assert report["mean_change"] > 0

    def test_evaluate_field_by_field_recomputation(self, hub):
        from xaisvc import metrics
        rng = np.random.default_rng(52)
        records = []
        for i in range(200):
            original = float(rng.uniform(0.2, 0.9))
            masked = float(rng.uniform(0.0, 1.0))
            records.append({"sample_id": f"s{i:03d}", "original": original,
                            "masked": masked,
                            "delta": abs(masked - original) / original})
        report = hub.handle_evaluate({
            "explanations": {"method_id": "m", "explanations": records},
            "options": {"bins": 50, "threshold": 0.5}})
        deltas = [r["delta"] for r in records]
        explanation_set = metrics.ExplanationSet("m", tuple(
            metrics.Explanation(r["sample_id"], "m", r["original"],
                                r["masked"], r["delta"]) for r in records))
        assert report["mean_change"] == pytest.approx(
            metrics.mean_change(deltas), abs=1e-15)
        assert report["fraction_exceeding"]["value"] == \
            metrics.fraction_exceeding(deltas, 0.5)
        assert report["stability"]["mean_pairwise_distance"] == \
            pytest.approx(metrics.stability(explanation_set)
                          .mean_pairwise_distance, abs=1e-15)
        assert report["histogram"]["counts"] == \
            list(metrics.histogram(deltas).counts)

    def test_evaluate_empty_rejected(self, hub):
        with pytest.raises(EmptyInput):
            hub.handle_evaluate({"explanations": {"method_id": "m",
                                                  "explanations": []}})

    def test_augment_via_wire_records_lambda(self, hub):
        out = hub.handle_augment("g", {"method": "cutmix",
                                       "params": {"new_group_id": "g2",
                                                  "seed": 3}})
        assert 0.0 < out["lambda"] < 1.0
        assert out["sample_count"] == 4
        assert hub.datasets.get_group("g2").metadata["lambda"] == out["lambda"]

    def test_malformed_payloads(self, hub):
        with pytest.raises(SchemaViolation):
            hub.handle_predict("m", {"image": {"height": 2}})
        with pytest.raises(SchemaViolation):
            hub.handle_explain("occlusion", {"image": "nope",
                                             "model_endpoint": "x"})


class _ConstantModel:
    def predict(self, image):
        return "fixed", 0.7, {"fixed": 0.7, "other": 0.3}
