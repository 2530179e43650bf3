"""Open HTTP API: coordination-center routes plus the built-in reference
service mounts. External services implement the same downstream contract the
/reference/* mounts expose, so both sides of every integration are testable
against one wire format."""

from __future__ import annotations

from fastapi import Body, FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import demo as demo_module
from .__about__ import __version__
from .center import CoordinationCenter
from .errors import DuplicateId, UnknownTicket, XaiServiceError
from .provenance import export_graph, to_dot

_STATUS_BY_CODE = {
    "duplicate_id": 409,
    "group_has_children": 409,
    "missing_service": 409,
    "not_rerunnable": 409,
    "incomparable_shapes": 409,
    "unknown_service": 404,
    "unknown_sheet": 404,
    "unknown_ticket": 404,
    "unknown_pipeline": 404,
    "unknown_group": 404,
    "unknown_result": 404,
    "service_call_failed": 502,
}


def create_app(center: CoordinationCenter | None = None) -> FastAPI:
    center = center or CoordinationCenter()
    app = FastAPI(title="xaisvc", version=__version__)
    app.state.center = center
    app.state.demo_seed = None

    @app.exception_handler(XaiServiceError)
    async def _error_handler(_request: Request, exc: XaiServiceError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(status_code=status, content={"error": exc.to_payload()})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    # -- services ------------------------------------------------------------

    @app.post("/services", status_code=201)
    def register_service(body: dict = Body(...)) -> dict:
        descriptor = center.register_service(
            body.get("service_id", ""), body.get("kind", ""),
            body.get("endpoint", ""), body.get("name", ""),
            body.get("notes", ""))
        return descriptor.to_payload()

    @app.get("/services")
    def list_services(kind: str | None = None) -> dict:
        return {"services": [s.to_payload() for s in center.list_services(kind)]}

    @app.get("/services/{service_id}")
    def get_service(service_id: str) -> dict:
        return center.get_service(service_id).to_payload()

    @app.delete("/services/{service_id}")
    def deregister_service(service_id: str) -> dict:
        return center.deregister_service(service_id).to_payload()

    # -- task sheets ------------------------------------------------------------

    @app.post("/task-sheets", status_code=201)
    def create_task_sheet(body: dict = Body(...)) -> dict:
        sheet = center.create_task_sheet(
            body.get("sheet_id", ""), body.get("kind", ""),
            body.get("name", ""), body.get("service_refs") or {},
            body.get("dataset_ref"), body.get("parameters") or {})
        return sheet.to_payload()

    @app.get("/task-sheets/{sheet_id}")
    def get_task_sheet(sheet_id: str) -> dict:
        return center.get_task_sheet(sheet_id).to_payload()

    # -- executions ------------------------------------------------------------

    @app.post("/executions", status_code=201)
    def execute_task(body: dict = Body(...)) -> dict:
        return center.execute_task(body.get("sheet_id", "")).to_payload()

    @app.get("/executions/{ticket}")
    def get_execution(ticket: str) -> dict:
        return center.get_status(ticket).to_payload()

    # -- pipelines ------------------------------------------------------------

    @app.post("/pipelines", status_code=201)
    def create_pipeline(body: dict = Body(...)) -> dict:
        pipeline = center.create_pipeline(
            body.get("pipeline_id", ""), body.get("name", ""),
            body.get("sheet_ids") or [])
        return pipeline.to_payload()

    @app.get("/pipelines/{pipeline_id}")
    def get_pipeline(pipeline_id: str) -> dict:
        return center.get_pipeline(pipeline_id).to_payload()

    @app.post("/pipelines/{pipeline_id}/executions", status_code=201)
    def execute_pipeline(pipeline_id: str) -> dict:
        return center.execute_pipeline(pipeline_id).to_payload()

    @app.get("/pipelines/{pipeline_id}/executions/{ticket}")
    def get_pipeline_execution(pipeline_id: str, ticket: str) -> dict:
        snapshot = center.get_pipeline_execution(ticket)
        if snapshot.pipeline_id != pipeline_id:
            raise UnknownTicket(
                f"execution {ticket!r} does not belong to pipeline "
                f"{pipeline_id!r}"
            )
        return snapshot.to_payload()

    # -- provenance ------------------------------------------------------------

    @app.get("/provenance/pipelines/{pipeline_id}")
    def get_provenance(pipeline_id: str, format: str = "json"):
        graph = center.pipeline_graph(pipeline_id)
        if format == "dot":
            return Response(content=to_dot(graph), media_type="text/vnd.graphviz")
        if format == "jsonl":
            return Response(content=export_graph(graph),
                            media_type="application/jsonl")
        return graph.to_payload()

    @app.post("/provenance/pipelines/{pipeline_id}/rerun", status_code=201)
    def rerun_pipeline(pipeline_id: str, body: dict = Body(...)) -> dict:
        return center.rerun_pipeline(
            pipeline_id, body.get("execution_ticket", "")).to_payload()

    @app.get("/provenance/diff")
    def provenance_diff(a: str, b: str) -> dict:
        return center.diff_pipelines(a, b).to_payload()

    # -- results ------------------------------------------------------------

    @app.get("/results/{digest}")
    def get_results(digest: str) -> Response:
        return Response(content=center.results.get_bytes(digest),
                        media_type="application/json")

    # -- demo ------------------------------------------------------------

    @app.post("/demo", status_code=201)
    def run_demo(body: dict = Body(default={})) -> dict:
        seed = int(body.get("seed", demo_module.DEMO_SEED))
        if app.state.demo_seed is None:
            summary = demo_module.provision_demo(center, seed)
            app.state.demo_seed = seed
            return summary
        if app.state.demo_seed != seed:
            raise DuplicateId(
                f"demo already provisioned with seed {app.state.demo_seed}; "
                f"cannot re-provision with seed {seed}"
            )
        return demo_module.run_demo_pipelines(center, seed)

    # -- built-in reference service mounts ------------------------------------

    @app.get("/reference/datasets/groups/{group_id}/samples")
    def reference_samples(group_id: str) -> dict:
        return center.hub.handle_samples(group_id)

    @app.post("/reference/datasets/groups/{group_id}/augment", status_code=201)
    def reference_augment(group_id: str, body: dict = Body(...)) -> dict:
        return center.hub.handle_augment(group_id, body)

    @app.post("/reference/models/{model_id}/predict")
    def reference_predict(model_id: str, body: dict = Body(...)) -> dict:
        return center.hub.handle_predict(model_id, body)

    @app.post("/reference/xai/{method_id}/explain")
    def reference_explain(method_id: str, body: dict = Body(...)) -> dict:
        return center.hub.handle_explain(method_id, body)

    @app.post("/reference/evaluation/evaluate")
    def reference_evaluate(body: dict = Body(...)) -> dict:
        return center.hub.handle_evaluate(body)

    return app
