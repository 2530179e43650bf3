"""Coordination center: registry validation, execution lifecycle, pipelines,
and resource accounting."""

import random
import threading
import time

import pytest

from xaisvc.center import CoordinationCenter
from xaisvc.center.executor import estimate_energy_kwh
from xaisvc.errors import (
    DuplicateId,
    InvalidKind,
    InvalidSlug,
    KindMismatch,
    MissingRole,
    MissingService,
    NotRerunnable,
    UnknownService,
    UnknownSheet,
    UnknownTicket,
)
from xaisvc.services.datasets import generate_synthetic_dataset
from xaisvc.services.models import build_prototype_model


def provision_minimal(center, *, group_id="g", seed=7):
    center.add_dataset_group(generate_synthetic_dataset(
        2, 2, 6, 6, seed=seed, group_id=group_id))
    center.hub.add_model("proto", build_prototype_model(2, 6, 6))
    center.hub.add_xai_method("occlusion")
    center.register_service("db", "database", "builtin:datasets")
    center.register_service("model", "ai_model", "builtin:models/proto")
    center.register_service("xai", "xai_method", "builtin:xai/occlusion")
    center.register_service("ev", "evaluation", "builtin:evaluation")


def make_pipeline(center, pipeline_id="p", group_id="g", **xai_params):
    params = {"q": 0.5, "fill": 0.0, "window": 1, "stride": 1, **xai_params}
    center.create_task_sheet(
        f"{pipeline_id}-x", "xai", "explain",
        {"database": "db", "ai_model": "model", "xai_method": "xai"},
        dataset_ref=group_id, parameters=params)
    center.create_task_sheet(
        f"{pipeline_id}-e", "evaluation", "evaluate",
        {"database": "db", "evaluation": "ev"},
        parameters={"bins": 50, "threshold": 0.5})
    return center.create_pipeline(pipeline_id, "test pipeline",
                                  [f"{pipeline_id}-x", f"{pipeline_id}-e"])


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


class TestRegistry:
    def test_register_round_trip(self, center):
        center.register_service("toy-prototype", "ai_model",
                                "builtin:models/toy", name="toy")
        got = center.get_service("toy-prototype")
        assert got.kind == "ai_model"
        assert got.endpoint == "builtin:models/toy"
        assert got.name == "toy"

    def test_duplicate_id(self, center):
        center.register_service("dup", "ai_model", "e")
        with pytest.raises(DuplicateId):
            center.register_service("dup", "ai_model", "e")

    def test_invalid_kind_and_slug(self, center):
        with pytest.raises(InvalidKind):
            center.register_service("x", "classifier", "e")
        with pytest.raises(InvalidSlug):
            center.register_service("Bad Name", "ai_model", "e")
        with pytest.raises(InvalidKind):
            center.register_service("x", "ai_model", "")

    def test_resolve_by_kind_linear_scan_oracle(self, center):
        center.register_service("m1", "ai_model", "e1")
        center.register_service("m2", "ai_model", "e2")
        center.register_service("d1", "database", "e3")
        listed = {s.service_id for s in center.list_services("ai_model")}
        # oracle: linear scan of the full registry dump
        expected = {s.service_id for s in center.list_services()
                    if s.kind == "ai_model"}
        assert listed == expected == {"m1", "m2"}


class TestTaskSheets:
    def test_missing_role(self, center):
        provision_minimal(center)
        with pytest.raises(MissingRole):
            center.create_task_sheet("s", "xai", "n",
                                     {"database": "db", "ai_model": "model"},
                                     dataset_ref="g")

    def test_round_trip(self, center):
        provision_minimal(center)
        sheet = center.create_task_sheet(
            "s1", "xai", "explain",
            {"database": "db", "ai_model": "model", "xai_method": "xai"},
            dataset_ref="g", parameters={"q": 0.5, "seed": 7})
        got = center.get_task_sheet("s1")
        assert got.to_payload() == sheet.to_payload()
        assert got.parameters["q"] == 0.5

    def test_kind_mismatch(self, center):
        provision_minimal(center)
        with pytest.raises(KindMismatch):
            center.create_task_sheet(
                "s2", "xai", "n",
                {"database": "db", "ai_model": "ev", "xai_method": "xai"},
                dataset_ref="g")

    def test_unknown_service(self, center):
        provision_minimal(center)
        with pytest.raises(UnknownService):
            center.create_task_sheet(
                "s3", "xai", "n",
                {"database": "db", "ai_model": "ghost", "xai_method": "xai"},
                dataset_ref="g")

    def test_sheets_are_immutable(self, center):
        provision_minimal(center)
        sheet = center.create_task_sheet(
            "s4", "xai", "n",
            {"database": "db", "ai_model": "model", "xai_method": "xai"},
            dataset_ref="g", parameters={"q": 0.5})
        with pytest.raises(TypeError):
            sheet.parameters["q"] = 0.9
        with pytest.raises(DuplicateId):
            center.create_task_sheet(
                "s4", "xai", "n",
                {"database": "db", "ai_model": "model", "xai_method": "xai"},
                dataset_ref="g")


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


class TestExecution:
    def test_q1_all_deltas_zero(self, center):
        provision_minimal(center)
        make_pipeline(center, q=1.0)
        snap = center.execute_task("p-x")
        assert snap.status == "succeeded"
        payload = center.results.get(snap.results_hash)
        assert len(payload["explanations"]) == 4
        assert all(e["delta"] == 0.0 for e in payload["explanations"])

    def test_unreachable_endpoint_names_service(self, center):
        provision_minimal(center)
        center.register_service("dead", "ai_model",
                                "http://127.0.0.1:9/predict-nowhere")
        center.create_task_sheet(
            "sx", "xai", "n",
            {"database": "db", "ai_model": "dead", "xai_method": "xai"},
            dataset_ref="g")
        snap = center.execute_task("sx")
        assert snap.status == "failed"
        assert any("dead" in line for line in snap.log)
        assert snap.results_hash is None

    def test_seeded_config_rerun_identical_hash(self, center):
        provision_minimal(center)
        make_pipeline(center, window=2, stride=2)
        first = center.execute_task("p-x")
        second = center.execute_task("p-x")
        assert first.results_hash == second.results_hash
        assert first.ticket != second.ticket

    def test_unknown_sheet(self, center):
        with pytest.raises(UnknownSheet):
            center.execute_task("ghost")

    def test_get_status_and_terminal_immutability(self, center):
        provision_minimal(center)
        make_pipeline(center)
        snap = center.execute_task("p-x")
        polled = center.get_status(snap.ticket)
        assert polled.status == "succeeded"
        assert polled.ended_at >= polled.started_at
        again = center.get_status(snap.ticket)
        assert again.to_payload() == polled.to_payload()

    def test_unknown_ticket(self, center):
        with pytest.raises(UnknownTicket):
            center.get_status("nope")

    def test_explanation_count_matches_samples(self, center):
        provision_minimal(center)
        make_pipeline(center)
        snap = center.execute_task("p-x")
        payload = center.results.get(snap.results_hash)
        group = center.hub.datasets.get_group("g")
        assert len(payload["explanations"]) + len(payload["excluded"]) == \
            len(group.samples)
        assert payload["excluded"] == []

    def test_zero_confidence_sample_excluded_and_logged(self, center):
        provision_minimal(center)
        target = center.hub.datasets.get_group("g").samples[0]
        center.hub.add_model("zeroish",
                             _ZeroOnSample(target.image.pixels.tobytes()))
        center.register_service("zmodel", "ai_model", "builtin:models/zeroish")
        center.create_task_sheet(
            "zs", "xai", "n",
            {"database": "db", "ai_model": "zmodel", "xai_method": "xai"},
            dataset_ref="g", parameters={"q": 0.5})
        snap = center.execute_task("zs")
        assert snap.status == "succeeded"
        payload = center.results.get(snap.results_hash)
        assert len(payload["excluded"]) == 1
        assert payload["excluded"][0]["reason"] == "zero_denominator"
        assert len(payload["explanations"]) == 3
        assert any("excluded" in line for line in snap.log)

    def test_parallel_and_serial_payloads_identical(self):
        hashes = []
        for parallelism in (1, 4):
            from xaisvc.config import AppConfig
            c = CoordinationCenter(AppConfig(parallelism=parallelism))
            provision_minimal(c)
            make_pipeline(c)
            hashes.append(c.execute_task("p-x").results_hash)
            c.close()
        assert hashes[0] == hashes[1]


class TestPipelines:
    def test_pipeline_report_schema(self, center):
        provision_minimal(center)
        make_pipeline(center)
        execution = center.execute_pipeline("p")
        assert execution.status == "succeeded"
        eval_snap = center.get_status(execution.sheet_executions[-1])
        report = center.results.get(eval_snap.results_hash)["report"]
        for key in ("stability", "histogram", "fraction_exceeding",
                    "mean_change", "delta_summary"):
            assert key in report

    def test_failed_xai_aborts_evaluation(self, center):
        provision_minimal(center)
        center.register_service("dead", "ai_model", "http://127.0.0.1:9/x")
        center.create_task_sheet(
            "fx", "xai", "n",
            {"database": "db", "ai_model": "dead", "xai_method": "xai"},
            dataset_ref="g")
        center.create_task_sheet(
            "fe", "evaluation", "n", {"database": "db", "evaluation": "ev"})
        center.create_pipeline("fp", "failing", ["fx", "fe"])
        execution = center.execute_pipeline("fp")
        assert execution.status == "failed"
        assert len(execution.sheet_executions) == 1  # eval never created

    def test_pipeline_equals_manual_sequencing(self, center):
        provision_minimal(center)
        make_pipeline(center)
        execution = center.execute_pipeline("p")
        auto_eval = center.results.get(
            center.get_status(execution.sheet_executions[1]).results_hash)
        # oracle: run the sheets by hand, threading results_ref manually
        xai_snap = center.execute_task("p-x")
        manual_sheet = center.create_task_sheet(
            "manual-e", "evaluation", "n",
            {"database": "db", "evaluation": "ev"},
            parameters={"bins": 50, "threshold": 0.5,
                        "results_ref": xai_snap.results_hash})
        manual_snap = center.execute_task(manual_sheet.sheet_id)
        manual_eval = center.results.get(manual_snap.results_hash)
        assert manual_eval == auto_eval

    def test_standalone_evaluation_without_ref_fails(self, center):
        provision_minimal(center)
        center.create_task_sheet("lone-e", "evaluation", "n",
                                 {"database": "db", "evaluation": "ev"})
        snap = center.execute_task("lone-e")
        assert snap.status == "failed"
        assert any("results_ref" in line for line in snap.log)

    def test_concurrent_pipelines_do_not_interfere(self, center):
        provision_minimal(center)
        center.add_dataset_group(generate_synthetic_dataset(
            2, 2, 6, 6, seed=99, group_id="g2"))
        make_pipeline(center, "pa", "g")
        make_pipeline(center, "pb", "g2")
        serial = {
            "pa": center.execute_pipeline("pa"),
            "pb": center.execute_pipeline("pb"),
        }
        serial_hashes = {
            pid: [center.get_status(t).results_hash
                  for t in snap.sheet_executions]
            for pid, snap in serial.items()
        }
        results = {}

        def run(pid):
            results[pid] = center.execute_pipeline(pid)

        threads = [threading.Thread(target=run, args=(pid,))
                   for pid in ("pa", "pb")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for pid in ("pa", "pb"):
            concurrent_hashes = [center.get_status(t).results_hash
                                 for t in results[pid].sheet_executions]
            assert concurrent_hashes == serial_hashes[pid]


class TestRerun:
    def test_rerun_requires_success(self, center):
        provision_minimal(center)
        center.register_service("dead", "ai_model", "http://127.0.0.1:9/x")
        center.create_task_sheet(
            "fx", "xai", "n",
            {"database": "db", "ai_model": "dead", "xai_method": "xai"},
            dataset_ref="g")
        center.create_pipeline("fp", "failing", ["fx"])
        failed = center.execute_pipeline("fp")
        with pytest.raises(NotRerunnable):
            center.rerun_pipeline("fp", failed.ticket)

    def test_rerun_refused_after_deregistration(self, center):
        provision_minimal(center)
        make_pipeline(center)
        execution = center.execute_pipeline("p")
        center.deregister_service("xai")
        with pytest.raises(MissingService):
            center.rerun_pipeline("p", execution.ticket)

    def test_rerun_wrong_pipeline(self, center):
        provision_minimal(center)
        make_pipeline(center, "pa")
        make_pipeline(center, "pb")
        execution = center.execute_pipeline("pa")
        with pytest.raises(UnknownTicket):
            center.rerun_pipeline("pb", execution.ticket)


# ---------------------------------------------------------------------------
# resource usage
# ---------------------------------------------------------------------------


class TestResourceUsage:
    def test_zero_watts_zero_energy(self):
        assert estimate_energy_kwh(1234.5, 0.0) == 0.0

    def test_unit_arithmetic(self):
        assert estimate_energy_kwh(3600.0, 100.0) == pytest.approx(0.1)

    def test_execution_records_nonnegative_usage(self, center):
        provision_minimal(center)
        make_pipeline(center)
        snap = center.execute_task("p-x")
        usage = snap.resource_usage
        assert usage["wall_seconds"] >= 0.0
        assert usage["cpu_seconds"] >= 0.0
        assert usage["estimated_energy_kwh"] == pytest.approx(
            estimate_energy_kwh(usage["cpu_seconds"], center.config.watts))

    def test_pluggable_estimator(self):
        from xaisvc.center.executor import TaskExecutor
        from xaisvc.center.registry import Registry
        from xaisvc.center.results import ResultsStore

        executor = TaskExecutor(Registry(), None, ResultsStore(),
                                energy_estimator=lambda cpu: 42.0)
        assert executor.energy_estimator(5.0) == 42.0


# ---------------------------------------------------------------------------
# state machine
# ---------------------------------------------------------------------------


class TestStateMachine:
    def test_transition_log_and_polling_monotonicity(self, center):
        provision_minimal(center)
        center.hub.add_model("slow", _SlowModel())
        center.register_service("slow-model", "ai_model", "builtin:models/slow")
        center.create_task_sheet(
            "slow-sheet", "xai", "n",
            {"database": "db", "ai_model": "slow-model", "xai_method": "xai"},
            dataset_ref="g", parameters={"q": 0.5, "window": 6, "stride": 6})
        order = {"pending": 0, "running": 1, "succeeded": 2, "failed": 2}
        rng = random.Random(0)
        tickets = []
        observations = {}

        def poll(ticket):
            seen = []
            for _ in range(rng.randint(3, 8)):
                seen.append(center.get_status(ticket).status)
                time.sleep(0.001)
            observations.setdefault(ticket, []).append(seen)

        for _ in range(10):
            ticket = center.submit_task("slow-sheet")
            tickets.append(ticket)
            pollers = [threading.Thread(target=poll, args=(ticket,))
                       for _ in range(3)]
            for p in pollers:
                p.start()
            for p in pollers:
                p.join()

        for ticket in tickets:
            while center.get_status(ticket).status not in ("succeeded",
                                                           "failed"):
                time.sleep(0.005)
            # recorded transition log is the oracle for legal sequencing
            log = center.executor.transition_log(ticket)
            assert log[0] == "pending"
            assert log[1] == "running"
            assert log[-1] in ("succeeded", "failed")
            assert len(log) == 3
            for seen in observations[ticket]:
                ranks = [order[s] for s in seen]
                assert ranks == sorted(ranks)


class _ZeroOnSample:
    """Returns confidence 0 for one specific image, 0.6 otherwise."""

    def __init__(self, target_bytes):
        self.target = target_bytes

    def predict(self, image):
        if image.pixels.tobytes() == self.target:
            return "z", 0.0, {"z": 0.0}
        return "z", 0.6, {"z": 0.6}


class _SlowModel:
    def predict(self, image):
        time.sleep(0.002)
        return "s", 0.8, {"s": 0.8}
