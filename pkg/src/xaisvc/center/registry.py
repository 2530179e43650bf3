"""Service registry, immutable task sheets, and pipeline definitions."""

from __future__ import annotations

import threading
import types
from dataclasses import dataclass, field

from ..errors import (
    DuplicateId,
    InvalidKind,
    KindMismatch,
    MissingRole,
    UnknownPipeline,
    UnknownService,
    UnknownSheet,
)
from ..ids import validate_slug

SERVICE_KINDS = ("database", "ai_model", "xai_method", "evaluation")
SHEET_KINDS = ("xai", "evaluation")

# roles a sheet must bind, by sheet kind; role names equal service kinds
REQUIRED_ROLES = {
    "xai": ("database", "ai_model", "xai_method"),
    "evaluation": ("database", "evaluation"),
}


@dataclass(frozen=True)
class ServiceDescriptor:
    service_id: str
    kind: str
    endpoint: str
    name: str = ""
    notes: str = ""

    def to_payload(self) -> dict:
        return {
            "service_id": self.service_id,
            "kind": self.kind,
            "endpoint": self.endpoint,
            "name": self.name,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class TaskSheet:
    """Frozen task configuration; edits mean a new sheet under a new id."""

    sheet_id: str
    kind: str
    name: str
    service_refs: types.MappingProxyType
    dataset_ref: str | None = None
    parameters: types.MappingProxyType = field(
        default_factory=lambda: types.MappingProxyType({}))

    def to_payload(self) -> dict:
        return {
            "sheet_id": self.sheet_id,
            "kind": self.kind,
            "name": self.name,
            "service_refs": dict(self.service_refs),
            "dataset_ref": self.dataset_ref,
            "parameters": dict(self.parameters),
        }


@dataclass(frozen=True)
class Pipeline:
    pipeline_id: str
    name: str
    sheet_ids: tuple[str, ...]

    def to_payload(self) -> dict:
        return {
            "pipeline_id": self.pipeline_id,
            "name": self.name,
            "sheet_ids": list(self.sheet_ids),
        }


class Registry:
    """Many concurrent readers, serialized writers."""

    def __init__(self):
        self._services: dict[str, ServiceDescriptor] = {}
        self._sheets: dict[str, TaskSheet] = {}
        self._pipelines: dict[str, Pipeline] = {}
        self._lock = threading.RLock()

    # -- services ------------------------------------------------------------

    def register_service(self, service_id: str, kind: str, endpoint: str,
                         name: str = "", notes: str = "") -> ServiceDescriptor:
        validate_slug(service_id, "service_id")
        if kind not in SERVICE_KINDS:
            raise InvalidKind(f"service kind must be one of {SERVICE_KINDS}, "
                              f"got {kind!r}")
        if not endpoint:
            raise InvalidKind("service endpoint must be nonempty")
        descriptor = ServiceDescriptor(service_id, kind, endpoint, name, notes)
        with self._lock:
            if service_id in self._services:
                raise DuplicateId(f"service {service_id!r} already registered")
            self._services[service_id] = descriptor
        return descriptor

    def deregister_service(self, service_id: str) -> ServiceDescriptor:
        with self._lock:
            try:
                return self._services.pop(service_id)
            except KeyError:
                raise UnknownService(f"service {service_id!r} not registered") from None

    def get_service(self, service_id: str) -> ServiceDescriptor:
        with self._lock:
            try:
                return self._services[service_id]
            except KeyError:
                raise UnknownService(f"service {service_id!r} not registered") from None

    def has_service(self, service_id: str) -> bool:
        with self._lock:
            return service_id in self._services

    def list_services(self, kind: str | None = None) -> list[ServiceDescriptor]:
        with self._lock:
            services = list(self._services.values())
        if kind is not None:
            services = [s for s in services if s.kind == kind]
        return services

    # -- task sheets ------------------------------------------------------------

    def create_sheet(self, sheet_id: str, kind: str, name: str,
                     service_refs: dict, dataset_ref: str | None = None,
                     parameters: dict | None = None) -> TaskSheet:
        validate_slug(sheet_id, "sheet_id")
        if kind not in SHEET_KINDS:
            raise InvalidKind(f"sheet kind must be one of {SHEET_KINDS}, got {kind!r}")
        for role in REQUIRED_ROLES[kind]:
            if role not in service_refs:
                raise MissingRole(f"{kind} sheet requires a {role!r} service role")
        if kind == "xai" and not dataset_ref:
            raise MissingRole("xai sheets require a dataset_ref")
        with self._lock:
            if sheet_id in self._sheets:
                raise DuplicateId(f"sheet {sheet_id!r} already exists")
            for role, service_id in service_refs.items():
                if service_id not in self._services:
                    raise UnknownService(
                        f"sheet role {role!r} references unregistered service "
                        f"{service_id!r}"
                    )
                actual = self._services[service_id].kind
                if actual != role:
                    raise KindMismatch(
                        f"sheet role {role!r} bound to service {service_id!r} "
                        f"of kind {actual!r}"
                    )
            sheet = TaskSheet(
                sheet_id, kind, name,
                types.MappingProxyType(dict(service_refs)),
                dataset_ref,
                types.MappingProxyType(dict(parameters or {})),
            )
            self._sheets[sheet_id] = sheet
        return sheet

    def get_sheet(self, sheet_id: str) -> TaskSheet:
        with self._lock:
            try:
                return self._sheets[sheet_id]
            except KeyError:
                raise UnknownSheet(f"sheet {sheet_id!r} not found") from None

    # -- pipelines ------------------------------------------------------------

    def create_pipeline(self, pipeline_id: str, name: str,
                        sheet_ids: list[str]) -> Pipeline:
        validate_slug(pipeline_id, "pipeline_id")
        if not sheet_ids:
            raise MissingRole("pipeline needs at least one sheet")
        with self._lock:
            if pipeline_id in self._pipelines:
                raise DuplicateId(f"pipeline {pipeline_id!r} already exists")
            for sheet_id in sheet_ids:
                if sheet_id not in self._sheets:
                    raise UnknownSheet(f"pipeline references unknown sheet "
                                       f"{sheet_id!r}")
            pipeline = Pipeline(pipeline_id, name, tuple(sheet_ids))
            self._pipelines[pipeline_id] = pipeline
        return pipeline

    def get_pipeline(self, pipeline_id: str) -> Pipeline:
        with self._lock:
            try:
                return self._pipelines[pipeline_id]
            except KeyError:
                raise UnknownPipeline(f"pipeline {pipeline_id!r} not found") from None

    def list_pipelines(self) -> list[Pipeline]:
        with self._lock:
            return list(self._pipelines.values())
