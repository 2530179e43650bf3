"""Command-line front door for the orchestration service.

Every command wraps exactly one API call; with ``--format json`` stdout is
the raw response body (plus a trailing newline). Exit codes: 0 success,
1 the requested execution finished with status failed, 2 connection
failures, 3 input validation (local or HTTP 400/422), 4 other server
errors (unknown entities, conflicts, 5xx).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .client import ApiClient, ClientError, VALIDATION_EXIT
from .config import load_config
from .demo import DEMO_SEED, REFERENCE, VARIANTS

DEFAULT_SERVER = "http://127.0.0.1:8000"
_DEMO_PIPELINES = {REFERENCE, *VARIANTS}


@click.group()
@click.option("--server", envvar="XAISVC_SERVER", default=None,
              help=f"Coordination server base URL [default: {DEFAULT_SERVER}, "
                   "or host/port from --config].")
@click.option("--config", "config_path", envvar="XAISVC_CONFIG",
              type=click.Path(exists=True), default=None,
              help="Config file shared with the server (host/port derive the "
                   "server URL when --server is not given).")
@click.option("--format", "output_format", type=click.Choice(["human", "json"]),
              default="human", show_default=True)
@click.pass_context
def main(ctx, server, config_path, output_format):
    """XAI orchestration client: services, sheets, pipelines, provenance."""
    ctx.ensure_object(dict)
    if server is None:
        if config_path is not None:
            server = load_config(config_path).base_url
        else:
            server = DEFAULT_SERVER
    ctx.obj["server"] = server
    ctx.obj["config_path"] = config_path
    ctx.obj["format"] = output_format


def _client(ctx) -> ApiClient:
    return ApiClient(ctx.obj["server"])


def _emit(ctx, response, human: str | None = None) -> None:
    if ctx.obj["format"] == "json":
        sys.stdout.write(response.content.decode("utf-8"))
        sys.stdout.write("\n")
    else:
        click.echo(human if human is not None
                   else json.dumps(response.json(), indent=2))


def _fail(ctx, error: ClientError) -> None:
    if ctx.obj["format"] == "json" and error.body:
        sys.stdout.write(error.body.decode("utf-8"))
        sys.stdout.write("\n")
    else:
        detail = ""
        if error.body:
            try:
                detail = ": " + json.dumps(json.loads(error.body))
            except ValueError:
                detail = ": " + error.body.decode("utf-8", "replace")[:200]
        click.echo(f"error: {error}{detail}", err=True)
    ctx.exit(error.exit_code)


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="TOML or JSON config file.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, config_path, host, port):
    """Run the coordination server with the built-in reference services."""
    import uvicorn

    from .center import CoordinationCenter
    from .server import create_app

    config = load_config(config_path or ctx.obj.get("config_path"))
    if host is not None:
        config.host = host
    if port is not None:
        config.port = port
    app = create_app(CoordinationCenter(config))
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------


@main.command()
@click.option("--seed", type=int, default=DEMO_SEED, show_default=True)
@click.pass_context
def demo(ctx, seed):
    """Provision and execute the seeded reference scenario (all four
    variation cases) in one step."""
    client = _client(ctx)
    try:
        response = client.post("/demo", {"seed": seed})
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    body = response.json()
    lines = [f"demo provisioned with seed {body['seed']}"]
    for pipeline_id, entry in body["pipelines"].items():
        status = entry.get("status", "not-executed")
        lines.append(f"  {pipeline_id}: {status} "
                     f"(execution {entry.get('execution', '-')})")
    _emit(ctx, response, "\n".join(lines))


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------


@main.group()
def service():
    """Register and inspect microservices."""


@service.command("register")
@click.option("--id", "service_id", required=True)
@click.option("--kind", required=True,
              type=click.Choice(["database", "ai_model", "xai_method",
                                 "evaluation"]))
@click.option("--endpoint", required=True)
@click.option("--name", default="")
@click.option("--notes", default="")
@click.pass_context
def service_register(ctx, service_id, kind, endpoint, name, notes):
    client = _client(ctx)
    try:
        response = client.post("/services", {
            "service_id": service_id, "kind": kind, "endpoint": endpoint,
            "name": name, "notes": notes,
        })
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    _emit(ctx, response, f"registered {kind} service {service_id!r}")


@service.command("list")
@click.option("--kind", default=None)
@click.pass_context
def service_list(ctx, kind):
    client = _client(ctx)
    try:
        response = client.get("/services",
                              params={"kind": kind} if kind else None)
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    rows = [f"{s['service_id']}  [{s['kind']}]  {s['endpoint']}"
            for s in response.json()["services"]]
    _emit(ctx, response, "\n".join(rows) if rows else "(no services)")


# ---------------------------------------------------------------------------
# sheet
# ---------------------------------------------------------------------------


@main.group()
def sheet():
    """Create and inspect task sheets."""


@sheet.command("create")
@click.argument("file", type=click.Path(exists=True))
@click.pass_context
def sheet_create(ctx, file):
    """Create a task sheet from a JSON file mapping 1:1 to the API body."""
    try:
        body = json.loads(Path(file).read_text())
    except ValueError as exc:
        click.echo(f"error: {file} is not valid JSON: {exc}", err=True)
        ctx.exit(VALIDATION_EXIT)
        return
    client = _client(ctx)
    try:
        response = client.post("/task-sheets", body)
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    _emit(ctx, response, f"created sheet {response.json()['sheet_id']!r}")


@sheet.command("show")
@click.argument("sheet_id")
@click.pass_context
def sheet_show(ctx, sheet_id):
    client = _client(ctx)
    try:
        response = client.get(f"/task-sheets/{sheet_id}")
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    _emit(ctx, response)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@main.group()
def run():
    """Execute task sheets and pipelines."""


@run.command("task")
@click.argument("sheet_id")
@click.pass_context
def run_task(ctx, sheet_id):
    client = _client(ctx)
    try:
        response = client.post("/executions", {"sheet_id": sheet_id})
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    body = response.json()
    _emit(ctx, response,
          f"execution {body['ticket']} finished: {body['status']}")
    if body["status"] == "failed":
        ctx.exit(1)


@run.command("pipeline")
@click.argument("pipeline_id")
@click.option("--seed", type=int, default=None,
              help="Provision the demo suite with this seed if the pipeline "
                   "is missing (demo pipelines only).")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Where to write the final evaluation report "
                   "[default: report-<pipeline>.json].")
@click.pass_context
def run_pipeline(ctx, pipeline_id, seed, out_path):
    """Execute a pipeline and save its evaluation report."""
    client = _client(ctx)
    try:
        try:
            client.get(f"/pipelines/{pipeline_id}")
            exists = True
        except ClientError as exc:
            exists = False
            missing = exc.status == 404
            provisionable = pipeline_id in _DEMO_PIPELINES or seed is not None
            if not (missing and provisionable):
                _fail(ctx, exc)
                return
            client.post("/demo", {"seed": seed if seed is not None
                                  else DEMO_SEED})
        if exists and seed is not None and pipeline_id in _DEMO_PIPELINES:
            sheet = client.get(
                f"/task-sheets/{pipeline_id}-sheet-xai").json()
            provisioned_seed = sheet["parameters"].get("seed")
            if provisioned_seed != seed:
                click.echo(
                    f"error: pipeline {pipeline_id!r} was provisioned with "
                    f"seed {provisioned_seed}, not {seed}; sheets are "
                    "immutable", err=True)
                ctx.exit(VALIDATION_EXIT)
                return
        response = client.post(f"/pipelines/{pipeline_id}/executions", {})
        body = response.json()
        report_path = None
        if body["status"] == "succeeded" and body["sheet_executions"]:
            final = client.get(
                f"/executions/{body['sheet_executions'][-1]}").json()
            if final.get("results_ref"):
                report = client.get(
                    f"/results/{final['results_ref']['hash']}")
                report_path = Path(out_path or f"report-{pipeline_id}.json")
                report_path.write_bytes(report.content)
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    human = [f"pipeline {pipeline_id}: {body['status']} "
             f"(execution {body['ticket']})"]
    if report_path is not None:
        human.append(f"report written to {report_path}")
    _emit(ctx, response, "\n".join(human))
    if body["status"] == "failed":
        ctx.exit(1)


# ---------------------------------------------------------------------------
# status
# ---------------------------------------------------------------------------


@main.command()
@click.argument("ticket")
@click.pass_context
def status(ctx, ticket):
    """Show an execution snapshot by ticket."""
    client = _client(ctx)
    try:
        response = client.get(f"/executions/{ticket}")
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    body = response.json()
    _emit(ctx, response, f"{body['ticket']}: {body['status']} "
                         f"(sheet {body['sheet_id']})")


# ---------------------------------------------------------------------------
# prov
# ---------------------------------------------------------------------------


@main.group()
def prov():
    """Inspect, diff, and rerun provenance."""


@prov.command("show")
@click.argument("pipeline_id")
@click.option("--dot", is_flag=True, help="Emit DOT text for visualization.")
@click.pass_context
def prov_show(ctx, pipeline_id, dot):
    client = _client(ctx)
    try:
        params = {"format": "dot"} if dot else None
        response = client.get(f"/provenance/pipelines/{pipeline_id}",
                              params=params)
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    if dot:
        sys.stdout.write(response.content.decode("utf-8"))
        return
    body = response.json()
    _emit(ctx, response,
          f"pipeline {pipeline_id}: {len(body['nodes'])} nodes, "
          f"{len(body['edges'])} edges")


@prov.command("diff")
@click.argument("pipeline_a")
@click.argument("pipeline_b")
@click.pass_context
def prov_diff(ctx, pipeline_a, pipeline_b):
    client = _client(ctx)
    try:
        response = client.get("/provenance/diff",
                              params={"a": pipeline_a, "b": pipeline_b})
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    body = response.json()
    human = [f"changed:  {', '.join(body['changed']) or '(none)'}",
             f"affected: {', '.join(body['affected']) or '(none)'}"]
    _emit(ctx, response, "\n".join(human))


@prov.command("rerun")
@click.argument("pipeline_id")
@click.argument("execution_ticket")
@click.pass_context
def prov_rerun(ctx, pipeline_id, execution_ticket):
    client = _client(ctx)
    try:
        response = client.post(
            f"/provenance/pipelines/{pipeline_id}/rerun",
            {"execution_ticket": execution_ticket})
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    body = response.json()
    _emit(ctx, response, f"rerun {body['ticket']}: {body['status']}")
    if body["status"] == "failed":
        ctx.exit(1)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@main.group()
def report():
    """Export stored results."""


@report.command("export")
@click.argument("ticket")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def report_export(ctx, ticket, out_path):
    """Write the results payload of a task execution (evaluation reports
    include the 50-bin histogram and violin quartiles, plot-ready)."""
    client = _client(ctx)
    try:
        execution = client.get(f"/executions/{ticket}").json()
        if not execution.get("results_ref"):
            click.echo(f"error: execution {ticket} has no results "
                       f"(status {execution['status']})", err=True)
            ctx.exit(VALIDATION_EXIT)
            return
        response = client.get(f"/results/{execution['results_ref']['hash']}")
    except ClientError as exc:
        _fail(ctx, exc)
        return
    finally:
        client.close()
    Path(out_path).write_bytes(response.content)
    _emit(ctx, response, f"report written to {out_path}")


if __name__ == "__main__":
    main()
