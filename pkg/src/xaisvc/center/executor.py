"""Task and pipeline execution lifecycle.

Executions walk a monotone state machine pending → running → {succeeded,
failed}; snapshots taken at any moment never regress. Per-sample downstream
calls may fan out across threads up to a configured bound, but result
assembly is sample-id ordered so payload bytes are schedule-independent.
Failures never yield partial successes: the first downstream error fails
the whole task with the cause (and offending service id) in the log.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

from ..errors import UnknownTicket, XaiServiceError, ZeroDenominator
from ..ids import new_ticket
from ..imaging import Image, Mask
from ..metrics import prediction_change
from ..saliency import DEFAULT_FILL, DEFAULT_KEEP_FRACTION, apply_mask

PENDING = "pending"
RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"

_STATE_ORDER = {PENDING: 0, RUNNING: 1, SUCCEEDED: 2, FAILED: 2}


def utc_now() -> str:
    """UTC RFC-3339 with millisecond precision."""
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def estimate_energy_kwh(cpu_seconds: float, watts: float) -> float:
    """Pluggable default estimator: cpu time at a configured power draw."""
    return cpu_seconds * watts / 3600.0 / 1000.0


def record_resource_usage(wall_seconds: float, cpu_seconds: float,
                          estimator: Callable[[float], float]) -> dict:
    return {
        "wall_seconds": wall_seconds,
        "cpu_seconds": cpu_seconds,
        "estimated_energy_kwh": estimator(cpu_seconds),
    }


@dataclass(frozen=True)
class ExecutionSnapshot:
    ticket: str
    sheet_id: str
    status: str
    started_at: str
    ended_at: str | None
    results_hash: str | None
    results_location: str | None
    resource_usage: dict | None
    log: tuple[str, ...]

    def to_payload(self) -> dict:
        results_ref = None
        if self.results_hash is not None:
            results_ref = {"hash": self.results_hash,
                           "location": self.results_location}
        return {
            "ticket": self.ticket,
            "sheet_id": self.sheet_id,
            "status": self.status,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "results_ref": results_ref,
            "resource_usage": self.resource_usage,
            "log": list(self.log),
        }


@dataclass(frozen=True)
class PipelineExecutionSnapshot:
    ticket: str
    pipeline_id: str
    status: str
    started_at: str
    ended_at: str | None
    sheet_executions: tuple[str, ...]
    log: tuple[str, ...]

    def to_payload(self) -> dict:
        return {
            "ticket": self.ticket,
            "pipeline_id": self.pipeline_id,
            "status": self.status,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "sheet_executions": list(self.sheet_executions),
            "log": list(self.log),
        }


@dataclass
class _Record:
    ticket: str
    sheet_id: str
    status: str = PENDING
    started_at: str = field(default_factory=utc_now)
    ended_at: str | None = None
    results_hash: str | None = None
    results_location: str | None = None
    resource_usage: dict | None = None
    log: list[str] = field(default_factory=list)
    transitions: list[str] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self.transitions.append(self.status)

    def transition(self, status: str) -> None:
        with self.lock:
            if _STATE_ORDER[status] < _STATE_ORDER[self.status]:
                raise ValueError(f"illegal transition {self.status} -> {status}")
            self.status = status
            self.transitions.append(status)
            if status in (SUCCEEDED, FAILED):
                self.ended_at = utc_now()

    def snapshot(self) -> ExecutionSnapshot:
        with self.lock:
            return ExecutionSnapshot(
                self.ticket, self.sheet_id, self.status, self.started_at,
                self.ended_at, self.results_hash, self.results_location,
                dict(self.resource_usage) if self.resource_usage else None,
                tuple(self.log),
            )


@dataclass
class _PipelineRecord:
    ticket: str
    pipeline_id: str
    status: str = PENDING
    started_at: str = field(default_factory=utc_now)
    ended_at: str | None = None
    sheet_executions: list[str] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> PipelineExecutionSnapshot:
        with self.lock:
            return PipelineExecutionSnapshot(
                self.ticket, self.pipeline_id, self.status, self.started_at,
                self.ended_at, tuple(self.sheet_executions), tuple(self.log),
            )


class TaskExecutor:
    def __init__(self, registry, gateway, results, provenance=None, *,
                 parallelism: int = 2, watts: float = 30.0,
                 energy_estimator: Callable[[float], float] | None = None):
        self.registry = registry
        self.gateway = gateway
        self.results = results
        self.provenance = provenance
        self.parallelism = max(1, int(parallelism))
        self.energy_estimator = energy_estimator or (
            lambda cpu: estimate_energy_kwh(cpu, watts))
        self._records: dict[str, _Record] = {}
        self._pipeline_records: dict[str, _PipelineRecord] = {}
        self._lock = threading.RLock()
        self._pool: ThreadPoolExecutor | None = None

    # -- public API ------------------------------------------------------------

    def execute_task(self, sheet_id: str,
                     *, runtime: dict | None = None) -> ExecutionSnapshot:
        sheet = self.registry.get_sheet(sheet_id)  # fail fast on unknown sheets
        record = self._new_record(sheet_id)
        self._run(record, sheet, runtime or {})
        return record.snapshot()

    def submit_task(self, sheet_id: str) -> str:
        """Queue a task for background execution; returns its ticket."""
        sheet = self.registry.get_sheet(sheet_id)
        record = self._new_record(sheet_id)
        with self._lock:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=4,
                                                thread_name_prefix="xaisvc-exec")
            self._pool.submit(self._run, record, sheet, {})
        return record.ticket

    def get_status(self, ticket: str) -> ExecutionSnapshot:
        with self._lock:
            record = self._records.get(ticket)
        if record is None:
            raise UnknownTicket(f"no execution with ticket {ticket!r}")
        return record.snapshot()

    def get_pipeline_execution(self, ticket: str) -> PipelineExecutionSnapshot:
        with self._lock:
            record = self._pipeline_records.get(ticket)
        if record is None:
            raise UnknownTicket(f"no pipeline execution with ticket {ticket!r}")
        return record.snapshot()

    def transition_log(self, ticket: str) -> list[str]:
        with self._lock:
            record = self._records.get(ticket)
        if record is None:
            raise UnknownTicket(f"no execution with ticket {ticket!r}")
        with record.lock:
            return list(record.transitions)

    def execute_pipeline(self, pipeline_id: str, *,
                         derived_from: str | None = None
                         ) -> PipelineExecutionSnapshot:
        pipeline = self.registry.get_pipeline(pipeline_id)
        record = _PipelineRecord(new_ticket(), pipeline_id)
        with self._lock:
            self._pipeline_records[record.ticket] = record
        with record.lock:
            record.status = RUNNING

        xai_results_hash: str | None = None
        xai_ticket: str | None = None
        failed_sheet = None
        for sheet_id in pipeline.sheet_ids:
            sheet = self.registry.get_sheet(sheet_id)
            runtime = {}
            if sheet.kind == "evaluation" and xai_results_hash is not None:
                runtime["results_ref"] = xai_results_hash
                runtime["source_execution"] = xai_ticket
            snap = self.execute_task(sheet_id, runtime=runtime)
            with record.lock:
                record.sheet_executions.append(snap.ticket)
            if snap.status != SUCCEEDED:
                failed_sheet = sheet_id
                with record.lock:
                    record.log.append(
                        f"sheet {sheet_id} failed (ticket {snap.ticket}); "
                        "remaining sheets skipped"
                    )
                break
            if sheet.kind == "xai":
                xai_results_hash = snap.results_hash
                xai_ticket = snap.ticket
            with record.lock:
                record.log.append(f"sheet {sheet_id} succeeded "
                                  f"(ticket {snap.ticket})")

        with record.lock:
            record.status = FAILED if failed_sheet else SUCCEEDED
            record.ended_at = utc_now()
        if self.provenance is not None:
            self.provenance.record_pipeline_execution(
                record.snapshot(), derived_from=derived_from)
        return record.snapshot()

    # -- internals ------------------------------------------------------------

    def _new_record(self, sheet_id: str) -> _Record:
        record = _Record(new_ticket(), sheet_id)
        with self._lock:
            self._records[record.ticket] = record
        return record

    def _run(self, record: _Record, sheet, runtime: dict) -> None:
        record.transition(RUNNING)
        wall_start = time.monotonic()
        cpu_start = time.thread_time()
        try:
            if sheet.kind == "xai":
                payload = self._run_xai(sheet, record)
            else:
                payload = self._run_evaluation(sheet, runtime, record)
            digest, location = self.results.put(payload)
            with record.lock:
                record.results_hash = digest
                record.results_location = location
            record.transition(SUCCEEDED)
        except Exception as exc:  # noqa: BLE001 - the log is the error channel
            with record.lock:
                record.log.append(_describe_failure(exc))
            record.transition(FAILED)
        finally:
            usage = record_resource_usage(
                time.monotonic() - wall_start,
                time.thread_time() - cpu_start,
                self.energy_estimator,
            )
            with record.lock:
                record.resource_usage = usage
            if self.provenance is not None:
                self.provenance.record_task_execution(
                    record.snapshot(), sheet,
                    source_execution=runtime.get("source_execution"))

    def _run_xai(self, sheet, record: _Record) -> dict:
        db = self.registry.get_service(sheet.service_refs["database"])
        model = self.registry.get_service(sheet.service_refs["ai_model"])
        xai = self.registry.get_service(sheet.service_refs["xai_method"])

        group = self.gateway.get(
            f"{db.endpoint}/groups/{sheet.dataset_ref}/samples",
            service_id=db.service_id)
        params = {
            "window": int(sheet.parameters.get("window", 1)),
            "stride": int(sheet.parameters.get("stride", 1)),
            "fill": float(sheet.parameters.get("fill", DEFAULT_FILL)),
            "q": float(sheet.parameters.get("q", DEFAULT_KEEP_FRACTION)),
        }
        samples = sorted(group["samples"], key=lambda s: s["sample_id"])

        def process(sample: dict) -> tuple[str, dict]:
            sample_id = sample["sample_id"]
            image_payload = sample["image"]
            predicted = self.gateway.post(f"{model.endpoint}/predict",
                                          {"image": image_payload},
                                          service_id=model.service_id)
            original = float(predicted["confidence"])
            if original == 0.0:
                return "excluded", {"sample_id": sample_id,
                                    "reason": "zero_denominator"}
            explained = self.gateway.post(
                f"{xai.endpoint}/explain",
                {"image": image_payload, "model_endpoint": model.endpoint,
                 "params": params},
                service_id=xai.service_id)
            mask = Mask.from_payload(explained["mask"])
            image = Image.from_payload(image_payload)
            masked = apply_mask(image, mask, params["fill"],
                                source_id=sample_id, mask_params=params)
            repredicted = self.gateway.post(
                f"{model.endpoint}/predict",
                {"image": masked.image.to_payload()},
                service_id=model.service_id)
            masked_confidence = float(repredicted["confidence"])
            return "ok", {
                "sample_id": sample_id,
                "original": original,
                "masked": masked_confidence,
                "delta": prediction_change(original, masked_confidence),
            }

        if self.parallelism > 1 and len(samples) > 1:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                outcomes = list(pool.map(process, samples))
        else:
            outcomes = [process(s) for s in samples]

        explanations = [body for state, body in outcomes if state == "ok"]
        excluded = [body for state, body in outcomes if state == "excluded"]
        for body in excluded:
            with record.lock:
                record.log.append(
                    f"excluded sample {body['sample_id']}: {body['reason']}")
        return {
            "kind": "xai",
            "method_id": xai.service_id,
            "model_id": model.service_id,
            "group_id": sheet.dataset_ref,
            "params": params,
            "explanations": explanations,
            "excluded": excluded,
        }

    def _run_evaluation(self, sheet, runtime: dict, record: _Record) -> dict:
        evaluator = self.registry.get_service(sheet.service_refs["evaluation"])
        results_ref = runtime.get("results_ref") \
            or sheet.parameters.get("results_ref")
        if not results_ref:
            raise XaiServiceError(
                "evaluation sheet has no results_ref (set the parameter or "
                "run it inside a pipeline after an xai sheet)"
            )
        source = self.results.get(results_ref)
        options = {
            "bins": int(sheet.parameters.get("bins", 50)),
            "range": list(sheet.parameters.get("range", (0.0, 1.0))),
            "threshold": float(sheet.parameters.get("threshold", 0.5)),
            "distance": sheet.parameters.get("distance", "abs_delta"),
        }
        report = self.gateway.post(
            f"{evaluator.endpoint}/evaluate",
            {"explanations": {"method_id": source["method_id"],
                              "explanations": source["explanations"]},
             "options": options},
            service_id=evaluator.service_id)
        return {
            "kind": "evaluation",
            "source_results": results_ref,
            "options": options,
            "report": report,
        }


def _describe_failure(exc: Exception) -> str:
    if isinstance(exc, ZeroDenominator):
        return f"zero-denominator sample escaped exclusion: {exc}"
    if isinstance(exc, XaiServiceError):
        service = exc.details.get("service_id") if exc.details else None
        prefix = f"service {service}: " if service else ""
        return f"{prefix}{exc.code}: {exc}"
    return f"{type(exc).__name__}: {exc}"
