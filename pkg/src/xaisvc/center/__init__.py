"""Coordination center: the facade tying registry, reference hub, gateway,
executor, results store, and provenance together. The HTTP server and the
tests drive the system exclusively through this class."""

from __future__ import annotations

from ..config import AppConfig
from ..errors import MissingService, NotRerunnable, UnknownTicket
from ..provenance import DiffReport, ProvenanceStore, ProvGraph, diff
from ..services.datasets import DatasetGroup, DatasetStore
from ..services.hub import ReferenceHub
from ..wire import content_hash
from .executor import (
    ExecutionSnapshot,
    PipelineExecutionSnapshot,
    TaskExecutor,
    estimate_energy_kwh,
    record_resource_usage,
)
from .gateway import ServiceGateway
from .registry import Pipeline, Registry, ServiceDescriptor, TaskSheet
from .results import ResultsStore

__all__ = [
    "CoordinationCenter",
    "ExecutionSnapshot",
    "PipelineExecutionSnapshot",
    "Pipeline",
    "Registry",
    "ServiceDescriptor",
    "ServiceGateway",
    "TaskExecutor",
    "TaskSheet",
    "ResultsStore",
    "estimate_energy_kwh",
    "record_resource_usage",
]


class CoordinationCenter:
    def __init__(self, config: AppConfig | None = None,
                 hub: ReferenceHub | None = None):
        self.config = config or AppConfig()
        self.hub = hub or ReferenceHub(DatasetStore(self.config.storage_path))
        self.gateway = ServiceGateway(hub=self.hub)
        self.hub.bind_gateway(self.gateway)
        self.registry = Registry()
        self.provenance = ProvenanceStore(self.config.storage_path)
        self.results = ResultsStore(self.config.storage_path)
        self.executor = TaskExecutor(
            self.registry, self.gateway, self.results, self.provenance,
            parallelism=self.config.parallelism, watts=self.config.watts,
        )

    def close(self) -> None:
        self.gateway.close()

    # -- services ------------------------------------------------------------

    def register_service(self, service_id: str, kind: str, endpoint: str,
                         name: str = "", notes: str = "") -> ServiceDescriptor:
        descriptor = self.registry.register_service(service_id, kind, endpoint,
                                                    name, notes)
        self.provenance.record_service(descriptor)
        return descriptor

    def deregister_service(self, service_id: str) -> ServiceDescriptor:
        return self.registry.deregister_service(service_id)

    def get_service(self, service_id: str) -> ServiceDescriptor:
        return self.registry.get_service(service_id)

    def list_services(self, kind: str | None = None) -> list[ServiceDescriptor]:
        return self.registry.list_services(kind)

    # -- datasets ------------------------------------------------------------

    def add_dataset_group(self, group: DatasetGroup) -> DatasetGroup:
        """Store a group in the built-in dataset service."""
        return self.hub.datasets.add_group(group)

    def augment_dataset(self, database_service_id: str, parent_group_id: str,
                        new_group_id: str, seed: int,
                        lam: float | None = None,
                        method: str = "cutmix") -> dict:
        """Augment through the database service and record provenance
        (augmentation node, derived dataset node, lineage edges)."""
        db = self.registry.get_service(database_service_id)
        self._ensure_dataset_recorded(db, parent_group_id)
        params = {"new_group_id": new_group_id, "seed": seed}
        if lam is not None:
            params["lambda"] = lam
        summary = self.gateway.post(
            f"{db.endpoint}/groups/{parent_group_id}/augment",
            {"method": method, "params": params},
            service_id=db.service_id)
        payload = self.gateway.get(
            f"{db.endpoint}/groups/{new_group_id}/samples",
            service_id=db.service_id)
        self.provenance.record_augmentation(
            f"aug-{new_group_id}", parent_group_id, payload,
            content_hash(payload), summary["method"], summary["lambda"],
            summary["seed"])
        return summary

    def _ensure_dataset_recorded(self, db: ServiceDescriptor,
                                 group_id: str) -> None:
        if self.provenance.has_node(group_id):
            return
        payload = self.gateway.get(f"{db.endpoint}/groups/{group_id}/samples",
                                   service_id=db.service_id)
        self.provenance.record_dataset(payload, content_hash(payload))

    # -- task sheets ------------------------------------------------------------

    def create_task_sheet(self, sheet_id: str, kind: str, name: str,
                          service_refs: dict, dataset_ref: str | None = None,
                          parameters: dict | None = None) -> TaskSheet:
        sheet = self.registry.create_sheet(sheet_id, kind, name, service_refs,
                                           dataset_ref, parameters)
        if sheet.dataset_ref:
            db = self.registry.get_service(sheet.service_refs["database"])
            self._ensure_dataset_recorded(db, sheet.dataset_ref)
        self.provenance.record_sheet(sheet)
        return sheet

    def get_task_sheet(self, sheet_id: str) -> TaskSheet:
        return self.registry.get_sheet(sheet_id)

    # -- pipelines ------------------------------------------------------------

    def create_pipeline(self, pipeline_id: str, name: str,
                        sheet_ids: list[str]) -> Pipeline:
        pipeline = self.registry.create_pipeline(pipeline_id, name, sheet_ids)
        self.provenance.record_pipeline(pipeline)
        return pipeline

    def get_pipeline(self, pipeline_id: str) -> Pipeline:
        return self.registry.get_pipeline(pipeline_id)

    # -- execution ------------------------------------------------------------

    def execute_task(self, sheet_id: str) -> ExecutionSnapshot:
        return self.executor.execute_task(sheet_id)

    def submit_task(self, sheet_id: str) -> str:
        return self.executor.submit_task(sheet_id)

    def get_status(self, ticket: str) -> ExecutionSnapshot:
        return self.executor.get_status(ticket)

    def execute_pipeline(self, pipeline_id: str) -> PipelineExecutionSnapshot:
        self.registry.get_pipeline(pipeline_id)
        return self.executor.execute_pipeline(pipeline_id)

    def get_pipeline_execution(self, ticket: str) -> PipelineExecutionSnapshot:
        return self.executor.get_pipeline_execution(ticket)

    # -- provenance ------------------------------------------------------------

    def pipeline_graph(self, pipeline_id: str) -> ProvGraph:
        return self.provenance.get_pipeline_graph(pipeline_id)

    def diff_pipelines(self, pipeline_a: str, pipeline_b: str) -> DiffReport:
        return diff(self.pipeline_graph(pipeline_a),
                    self.pipeline_graph(pipeline_b))

    def rerun_pipeline(self, pipeline_id: str,
                       execution_ticket: str) -> PipelineExecutionSnapshot:
        """Re-execute the frozen configuration behind a succeeded pipeline
        execution; refused (never silently substituted) when any referenced
        service has been deregistered."""
        original = self.executor.get_pipeline_execution(execution_ticket)
        if original.pipeline_id != pipeline_id:
            raise UnknownTicket(
                f"execution {execution_ticket!r} does not belong to pipeline "
                f"{pipeline_id!r}"
            )
        if original.status != "succeeded":
            raise NotRerunnable(
                f"execution {execution_ticket!r} is {original.status}; only "
                "succeeded executions can be rerun"
            )
        pipeline = self.registry.get_pipeline(pipeline_id)
        for sheet_id in pipeline.sheet_ids:
            sheet = self.registry.get_sheet(sheet_id)
            for role, service_id in sheet.service_refs.items():
                if not self.registry.has_service(service_id):
                    raise MissingService(
                        f"rerun refused: sheet {sheet_id!r} role {role!r} "
                        f"references deregistered service {service_id!r}"
                    )
        return self.executor.execute_pipeline(pipeline_id,
                                              derived_from=execution_ticket)
