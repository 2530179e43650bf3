"""Graph-format provenance: every service, sheet, dataset, augmentation, and
execution becomes a node; relations become directed edges.

The store is append-only: nodes are written once, at the moment their
attributes are final (executions therefore appear only once terminal), and
later events may only add new nodes and edges. Readers always see committed
snapshots. When a storage path is configured the stream also lands in a
JSON-lines file.

Edge direction follows the natural reading of each relation (an execution
``executes`` its sheet, a sheet ``belongs_to_pipeline``, a child is
``derived_from`` its parent). Change-impact traversal ("what is downstream
of this configuration node") therefore follows a per-relation influence
orientation, defined in INFLUENCE below.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DanglingReference,
    IncomparableShapes,
    SchemaViolation,
    UnknownPipeline,
)

NODE_KINDS = (
    "microservice",
    "dataset",
    "augmentation",
    "xai_task_sheet",
    "evaluation_task_sheet",
    "task_execution",
    "pipeline",
    "pipeline_execution",
)

RELATIONS = (
    "uses_service",
    "uses_dataset",
    "derived_from",
    "executes",
    "belongs_to_pipeline",
    "produced",
)

SHEET_KIND_TO_NODE = {"xai": "xai_task_sheet", "evaluation": "evaluation_task_sheet"}

# endpoint-kind compatibility per relation: (allowed from-kinds, allowed to-kinds)
_RELATION_ENDPOINTS = {
    "uses_service": ({"xai_task_sheet", "evaluation_task_sheet", "task_execution"},
                     {"microservice"}),
    "uses_dataset": ({"xai_task_sheet", "evaluation_task_sheet", "task_execution",
                      "augmentation"}, {"dataset"}),
    "derived_from": ({"dataset", "task_execution", "pipeline_execution"},
                     {"dataset", "task_execution", "pipeline_execution"}),
    "executes": ({"task_execution", "pipeline_execution"},
                 {"xai_task_sheet", "evaluation_task_sheet", "pipeline"}),
    "belongs_to_pipeline": ({"xai_task_sheet", "evaluation_task_sheet",
                             "task_execution"}, {"pipeline", "pipeline_execution"}),
    "produced": ({"augmentation"}, {"dataset"}),
}

# influence flow for change impact: "forward" follows the edge direction,
# "reverse" runs against it (a service influences whatever uses it, etc.)
INFLUENCE = {
    "uses_service": "reverse",
    "uses_dataset": "reverse",
    "derived_from": "reverse",
    "executes": "reverse",
    "belongs_to_pipeline": "forward",
    "produced": "forward",
}

# attributes compared when diffing role-matched configuration nodes; identity
# attributes (ids, display names, timestamps) are deliberately excluded
_COMPARABLE_ATTRS = {
    "microservice": ("service_kind", "endpoint", "notes"),
    "dataset": ("content_hash", "sample_count", "height", "width", "channels"),
    "augmentation": ("method", "lambda", "seed"),
    "xai_task_sheet": ("kind", "parameters"),
    "evaluation_task_sheet": ("kind", "parameters"),
    "pipeline": (),
}

_CONFIG_KINDS = frozenset(_COMPARABLE_ATTRS)


@dataclass(frozen=True)
class ProvNode:
    node_id: str
    kind: str
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")

    def to_payload(self) -> dict:
        return {"node_id": self.node_id, "kind": self.kind,
                "attributes": self.attributes}


@dataclass(frozen=True)
class ProvEdge:
    source: str
    target: str
    relation: str

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")

    def to_payload(self) -> dict:
        return {"from": self.source, "to": self.target, "relation": self.relation}


@dataclass(frozen=True)
class ProvGraph:
    nodes: dict[str, ProvNode]
    edges: tuple[ProvEdge, ...]
    root: str | None = None

    def outgoing(self, node_id: str, relation: str | None = None):
        return [e for e in self.edges if e.source == node_id
                and (relation is None or e.relation == relation)]

    def incoming(self, node_id: str, relation: str | None = None):
        return [e for e in self.edges if e.target == node_id
                and (relation is None or e.relation == relation)]

    def nodes_by_kind(self, kind: str) -> list[ProvNode]:
        return [n for n in self.nodes.values() if n.kind == kind]

    def to_payload(self) -> dict:
        return {
            "root": self.root,
            "nodes": [self.nodes[nid].to_payload() for nid in sorted(self.nodes)],
            "edges": [e.to_payload() for e in _sorted_edges(self.edges)],
        }


@dataclass(frozen=True)
class DiffReport:
    """Red/blue split: ``changed`` holds configuration deltas, ``affected``
    everything influence-downstream of them (the two sets never overlap)."""

    changed: frozenset[str]
    affected: frozenset[str]
    deltas: tuple[dict, ...]

    def to_payload(self) -> dict:
        return {
            "changed": sorted(self.changed),
            "affected": sorted(self.affected),
            "deltas": list(self.deltas),
        }


def _sorted_edges(edges) -> list[ProvEdge]:
    return sorted(edges, key=lambda e: (e.source, e.relation, e.target))


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


class ProvenanceStore:
    """Append-only node/edge log with committed-snapshot reads."""

    def __init__(self, storage_path: str | Path | None = None):
        self._nodes: dict[str, ProvNode] = {}
        self._edges: list[ProvEdge] = []
        self._edge_set: set[tuple[str, str, str]] = set()
        self._lock = threading.RLock()
        self._log_path = Path(storage_path) / "provenance.jsonl" \
            if storage_path else None
        if self._log_path is not None:
            self._log_path.parent.mkdir(parents=True, exist_ok=True)

    # -- event recording ---------------------------------------------------

    def record(self, nodes: list[ProvNode] = (), edges: list[ProvEdge] = ()) -> None:
        """Atomically append one event's nodes and edges.

        Re-recording an existing node is a no-op when the attributes are
        identical and an error otherwise (prior nodes are never mutated).
        """
        with self._lock:
            fresh_nodes = []
            known = set(self._nodes)
            for node in nodes:
                existing = self._nodes.get(node.node_id)
                if existing is not None:
                    if existing.kind != node.kind \
                            or existing.attributes != node.attributes:
                        raise ValueError(
                            f"node {node.node_id!r} already recorded with "
                            "different content (store is append-only)"
                        )
                    continue
                fresh_nodes.append(node)
                known.add(node.node_id)
            fresh_edges = []
            fresh_keys = set()
            for edge in edges:
                for endpoint in (edge.source, edge.target):
                    if endpoint not in known:
                        raise DanglingReference(
                            f"edge {edge.relation} references unknown node "
                            f"{endpoint!r}"
                        )
                from_kinds, to_kinds = _RELATION_ENDPOINTS[edge.relation]
                source_kind = self._kind_of(edge.source, fresh_nodes)
                target_kind = self._kind_of(edge.target, fresh_nodes)
                if source_kind not in from_kinds or target_kind not in to_kinds:
                    raise DanglingReference(
                        f"relation {edge.relation!r} incompatible with "
                        f"{source_kind} -> {target_kind}"
                    )
                key = (edge.source, edge.target, edge.relation)
                if key in self._edge_set or key in fresh_keys:
                    continue
                fresh_edges.append(edge)
                fresh_keys.add(key)
            # validation is complete; commit the whole event at once
            for node in fresh_nodes:
                self._nodes[node.node_id] = node
            self._edges.extend(fresh_edges)
            self._edge_set |= fresh_keys
            self._append_log(fresh_nodes, fresh_edges)

    def _kind_of(self, node_id: str, pending: list[ProvNode]) -> str:
        node = self._nodes.get(node_id)
        if node is None:
            node = next(n for n in pending if n.node_id == node_id)
        return node.kind

    def _append_log(self, nodes, edges) -> None:
        if self._log_path is None or (not nodes and not edges):
            return
        with self._log_path.open("a") as fh:
            for node in nodes:
                fh.write(json.dumps({"type": "node", **node.to_payload()},
                                    sort_keys=True) + "\n")
            for edge in edges:
                fh.write(json.dumps({"type": "edge", **edge.to_payload()},
                                    sort_keys=True) + "\n")

    # -- typed recording events ---------------------------------------------

    def record_service(self, descriptor) -> None:
        self.record(nodes=[ProvNode(descriptor.service_id, "microservice", {
            "service_id": descriptor.service_id,
            "service_kind": descriptor.kind,
            "endpoint": descriptor.endpoint,
            "name": descriptor.name,
            "notes": descriptor.notes,
        })])

    def record_dataset(self, group_payload: dict, dataset_hash: str) -> None:
        samples = group_payload.get("samples", [])
        first = samples[0]["image"] if samples else {}
        self.record(nodes=[ProvNode(group_payload["group_id"], "dataset", {
            "group_id": group_payload["group_id"],
            "name": group_payload.get("name", ""),
            "sample_count": len(samples),
            "height": first.get("height"),
            "width": first.get("width"),
            "channels": first.get("channels"),
            "content_hash": dataset_hash,
        })])

    def record_augmentation(self, augmentation_id: str, parent_group_id: str,
                            new_group_payload: dict, dataset_hash: str,
                            method: str, lam: float, seed: int) -> None:
        new_group_id = new_group_payload["group_id"]
        samples = new_group_payload.get("samples", [])
        first = samples[0]["image"] if samples else {}
        self.record(
            nodes=[
                ProvNode(augmentation_id, "augmentation", {
                    "method": method, "lambda": lam, "seed": seed,
                    "parent_group_id": parent_group_id,
                    "group_id": new_group_id,
                }),
                ProvNode(new_group_id, "dataset", {
                    "group_id": new_group_id,
                    "name": new_group_payload.get("name", ""),
                    "sample_count": len(samples),
                    "height": first.get("height"),
                    "width": first.get("width"),
                    "channels": first.get("channels"),
                    "content_hash": dataset_hash,
                }),
            ],
            edges=[
                ProvEdge(augmentation_id, parent_group_id, "uses_dataset"),
                ProvEdge(augmentation_id, new_group_id, "produced"),
                ProvEdge(new_group_id, parent_group_id, "derived_from"),
            ],
        )

    def record_sheet(self, sheet) -> None:
        kind = SHEET_KIND_TO_NODE[sheet.kind]
        edges = [ProvEdge(sheet.sheet_id, service_id, "uses_service")
                 for service_id in sorted(set(sheet.service_refs.values()))]
        if sheet.dataset_ref and self.has_node(sheet.dataset_ref):
            edges.append(ProvEdge(sheet.sheet_id, sheet.dataset_ref,
                                  "uses_dataset"))
        self.record(
            nodes=[ProvNode(sheet.sheet_id, kind, {
                "sheet_id": sheet.sheet_id,
                "kind": sheet.kind,
                "name": sheet.name,
                "service_refs": dict(sheet.service_refs),
                "dataset_ref": sheet.dataset_ref,
                "parameters": dict(sheet.parameters),
            })],
            edges=edges,
        )

    def record_pipeline(self, pipeline) -> None:
        self.record(
            nodes=[ProvNode(pipeline.pipeline_id, "pipeline", {
                "pipeline_id": pipeline.pipeline_id,
                "name": pipeline.name,
                "sheets": list(pipeline.sheet_ids),
            })],
            edges=[ProvEdge(sheet_id, pipeline.pipeline_id, "belongs_to_pipeline")
                   for sheet_id in pipeline.sheet_ids],
        )

    def record_task_execution(self, snapshot, sheet,
                              source_execution: str | None = None) -> None:
        edges = [ProvEdge(snapshot.ticket, sheet.sheet_id, "executes")]
        for service_id in sorted(set(sheet.service_refs.values())):
            if self.has_node(service_id):
                edges.append(ProvEdge(snapshot.ticket, service_id, "uses_service"))
        if sheet.dataset_ref and self.has_node(sheet.dataset_ref):
            edges.append(ProvEdge(snapshot.ticket, sheet.dataset_ref,
                                  "uses_dataset"))
        if source_execution and self.has_node(source_execution):
            edges.append(ProvEdge(snapshot.ticket, source_execution,
                                  "derived_from"))
        self.record(
            nodes=[ProvNode(snapshot.ticket, "task_execution", {
                "ticket": snapshot.ticket,
                "sheet_id": snapshot.sheet_id,
                "status": snapshot.status,
                "started_at": snapshot.started_at,
                "ended_at": snapshot.ended_at,
                "results_hash": snapshot.results_hash,
                "resource_usage": snapshot.resource_usage,
            })],
            edges=edges,
        )

    def record_pipeline_execution(self, snapshot,
                                  derived_from: str | None = None) -> None:
        edges = [ProvEdge(snapshot.ticket, snapshot.pipeline_id, "executes")]
        for task_ticket in snapshot.sheet_executions:
            if self.has_node(task_ticket):
                edges.append(ProvEdge(task_ticket, snapshot.ticket,
                                      "belongs_to_pipeline"))
        if derived_from:
            if not self.has_node(derived_from):
                raise DanglingReference(
                    f"rerun references unknown pipeline execution "
                    f"{derived_from!r}"
                )
            edges.append(ProvEdge(snapshot.ticket, derived_from, "derived_from"))
        self.record(
            nodes=[ProvNode(snapshot.ticket, "pipeline_execution", {
                "ticket": snapshot.ticket,
                "pipeline_id": snapshot.pipeline_id,
                "status": snapshot.status,
                "started_at": snapshot.started_at,
                "ended_at": snapshot.ended_at,
                "sheet_executions": list(snapshot.sheet_executions),
                "log": list(snapshot.log),
            })],
            edges=edges,
        )

    # -- queries ------------------------------------------------------------

    def has_node(self, node_id: str) -> bool:
        with self._lock:
            return node_id in self._nodes

    def get_node(self, node_id: str) -> ProvNode | None:
        with self._lock:
            return self._nodes.get(node_id)

    def snapshot(self) -> ProvGraph:
        with self._lock:
            return ProvGraph(dict(self._nodes), tuple(self._edges))

    def get_pipeline_graph(self, pipeline_id: str) -> ProvGraph:
        """Subgraph of everything belonging to one pipeline's story.

        Traversal follows relation-specific expansion rules from the root so
        shared nodes (services, parent datasets) are pulled in without
        bleeding into unrelated pipelines.
        """
        whole = self.snapshot()
        root = whole.nodes.get(pipeline_id)
        if root is None or root.kind != "pipeline":
            raise UnknownPipeline(f"no pipeline node {pipeline_id!r}")

        expand = {
            "pipeline": (("in", "belongs_to_pipeline"), ("in", "executes")),
            "xai_task_sheet": (("out", "uses_service"), ("out", "uses_dataset")),
            "evaluation_task_sheet": (("out", "uses_service"),
                                      ("out", "uses_dataset")),
            "pipeline_execution": (("in", "belongs_to_pipeline"),
                                   ("out", "derived_from")),
            "task_execution": (("out", "uses_service"), ("out", "uses_dataset"),
                               ("out", "derived_from")),
            "dataset": (("out", "derived_from"), ("in", "produced")),
            "augmentation": (("out", "uses_dataset"),),
            "microservice": (),
        }
        seen = {pipeline_id}
        frontier = [pipeline_id]
        while frontier:
            node_id = frontier.pop()
            for direction, relation in expand[whole.nodes[node_id].kind]:
                edges = (whole.incoming(node_id, relation) if direction == "in"
                         else whole.outgoing(node_id, relation))
                for edge in edges:
                    neighbor = edge.source if direction == "in" else edge.target
                    if neighbor not in seen:
                        seen.add(neighbor)
                        frontier.append(neighbor)
        nodes = {nid: whole.nodes[nid] for nid in seen}
        edges = tuple(e for e in whole.edges
                      if e.source in seen and e.target in seen)
        return ProvGraph(nodes, edges, root=pipeline_id)


# ---------------------------------------------------------------------------
# Diff
# ---------------------------------------------------------------------------


def diff(a: ProvGraph, b: ProvGraph) -> DiffReport:
    """Compare two pipeline-rooted graphs by structural role.

    Nodes match by role position (pipeline root, sheet index, service role
    within a sheet, dataset slot and its lineage), never by id: two
    pipelines legitimately use different ids for corresponding slots.
    Only configuration nodes can be "changed"; executions are downstream
    outcomes and can only be "affected". A differing matched pair
    contributes both member ids, so changed is symmetric in a and b while
    attribute deltas stay oriented a→b.
    """
    roles_a = _role_map(a)
    roles_b = _role_map(b)
    _check_shapes(roles_a, roles_b)

    changed: set[str] = set()
    deltas: list[dict] = []
    for role in sorted(set(roles_a) | set(roles_b)):
        in_a = role in roles_a
        in_b = role in roles_b
        if in_a and in_b:
            na, nb = a.nodes[roles_a[role]], b.nodes[roles_b[role]]
            if na.node_id == nb.node_id:
                continue
            attr_deltas = _attr_deltas(na, nb)
            if attr_deltas:
                changed.update((na.node_id, nb.node_id))
                deltas.append({"role": role, "a": na.node_id, "b": nb.node_id,
                               "attributes": attr_deltas})
        else:
            node = a.nodes[roles_a[role]] if in_a else b.nodes[roles_b[role]]
            # a node present in both graphs is shared context, not an insertion
            if node.node_id in a.nodes and node.node_id in b.nodes:
                continue
            changed.add(node.node_id)
            deltas.append({"role": role,
                           "a": node.node_id if in_a else None,
                           "b": node.node_id if in_b else None,
                           "attributes": {}})

    affected: set[str] = set()
    for graph in (a, b):
        affected |= _influence_closure(graph, changed)
    affected -= changed
    return DiffReport(frozenset(changed), frozenset(affected), tuple(deltas))


def _role_map(graph: ProvGraph) -> dict[str, str]:
    if graph.root is None or graph.root not in graph.nodes \
            or graph.nodes[graph.root].kind != "pipeline":
        raise IncomparableShapes("diff requires pipeline-rooted graphs")
    roles = {"pipeline": graph.root}
    sheet_ids = graph.nodes[graph.root].attributes.get("sheets", [])
    for i, sheet_id in enumerate(sheet_ids):
        sheet = graph.nodes.get(sheet_id)
        if sheet is None:
            raise IncomparableShapes(f"pipeline sheet {sheet_id!r} missing from graph",
                                     unmatched_roles=[f"sheet[{i}]"])
        roles[f"sheet[{i}]"] = sheet_id
        refs = sheet.attributes.get("service_refs", {})
        for role_name in sorted(refs):
            roles[f"sheet[{i}].service.{role_name}"] = refs[role_name]
        dataset_ref = sheet.attributes.get("dataset_ref")
        if dataset_ref and dataset_ref in graph.nodes:
            base = f"sheet[{i}].dataset"
            roles[base] = dataset_ref
            _lineage_roles(graph, dataset_ref, base, roles)
    return roles


def _lineage_roles(graph: ProvGraph, dataset_id: str, prefix: str,
                   roles: dict[str, str]) -> None:
    producers = graph.incoming(dataset_id, "produced")
    if producers:
        roles[f"{prefix}.augmentation"] = producers[0].source
    parents = graph.outgoing(dataset_id, "derived_from")
    if parents:
        parent_id = parents[0].target
        roles[f"{prefix}.parent"] = parent_id
        _lineage_roles(graph, parent_id, f"{prefix}.parent", roles)


def _check_shapes(roles_a: dict[str, str], roles_b: dict[str, str]) -> None:
    sheets_a = sorted(r for r in roles_a if r.startswith("sheet[") and "." not in r)
    sheets_b = sorted(r for r in roles_b if r.startswith("sheet[") and "." not in r)
    if sheets_a != sheets_b:
        unmatched = sorted(set(sheets_a) ^ set(sheets_b))
        raise IncomparableShapes(
            f"pipelines have incompatible sheet structure: {unmatched}",
            unmatched_roles=unmatched,
        )


def _attr_deltas(na: ProvNode, nb: ProvNode) -> dict:
    if na.kind != nb.kind:
        return {"kind": [na.kind, nb.kind]}
    out = {}
    for attr in _COMPARABLE_ATTRS.get(na.kind, ()):
        va, vb = na.attributes.get(attr), nb.attributes.get(attr)
        if va != vb:
            out[attr] = [va, vb]
    return out


def _influence_closure(graph: ProvGraph, seeds: set[str]) -> set[str]:
    """Nodes with a directed influence path from any seed (seeds included)."""
    reached = {s for s in seeds if s in graph.nodes}
    frontier = list(reached)
    while frontier:
        node_id = frontier.pop()
        for edge in graph.edges:
            if INFLUENCE[edge.relation] == "forward" and edge.source == node_id:
                nxt = edge.target
            elif INFLUENCE[edge.relation] == "reverse" and edge.target == node_id:
                nxt = edge.source
            else:
                continue
            if nxt not in reached:
                reached.add(nxt)
                frontier.append(nxt)
    return reached


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------


def export_graph(graph: ProvGraph) -> str:
    """JSON-lines: one node or edge per line, stable order and field order."""
    lines = []
    for node_id in sorted(graph.nodes):
        lines.append(json.dumps({"type": "node", **graph.nodes[node_id].to_payload()},
                                sort_keys=True))
    for edge in _sorted_edges(graph.edges):
        lines.append(json.dumps({"type": "edge", **edge.to_payload()},
                                sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def import_graph(text: str) -> ProvGraph:
    nodes: dict[str, ProvNode] = {}
    edges: list[ProvEdge] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"line {line_no}: invalid JSON ({exc})",
                                  line=line_no) from None
        kind = entry.get("type")
        try:
            if kind == "node":
                node = ProvNode(entry["node_id"], entry["kind"],
                                entry.get("attributes", {}))
                nodes[node.node_id] = node
            elif kind == "edge":
                edges.append(ProvEdge(entry["from"], entry["to"],
                                      entry["relation"]))
            else:
                raise KeyError("type")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"line {line_no}: malformed {kind or 'entry'} "
                                  f"({exc})", line=line_no) from None
    for edge in edges:
        for endpoint in (edge.source, edge.target):
            if endpoint not in nodes:
                raise SchemaViolation(
                    f"edge references unknown node {endpoint!r}")
    pipelines = [n.node_id for n in nodes.values() if n.kind == "pipeline"]
    root = pipelines[0] if len(pipelines) == 1 else None
    return ProvGraph(nodes, tuple(edges), root=root)


def graphs_equal(a: ProvGraph, b: ProvGraph) -> bool:
    """Structural equality: same nodes (id, kind, attributes) and edge set."""
    if set(a.nodes) != set(b.nodes):
        return False
    for node_id, node in a.nodes.items():
        other = b.nodes[node_id]
        if node.kind != other.kind or node.attributes != other.attributes:
            return False
    return {(e.source, e.target, e.relation) for e in a.edges} == \
        {(e.source, e.target, e.relation) for e in b.edges}


def to_dot(graph: ProvGraph, changed: frozenset[str] = frozenset(),
           affected: frozenset[str] = frozenset()) -> str:
    """DOT rendering for external visualization; red marks changed nodes,
    blue the affected ones."""
    palette = {
        "microservice": "khaki",
        "dataset": "lightgreen",
        "augmentation": "palegreen",
        "xai_task_sheet": "lightskyblue",
        "evaluation_task_sheet": "lightskyblue",
        "task_execution": "plum",
        "pipeline": "lightgray",
        "pipeline_execution": "thistle",
    }
    lines = ["digraph provenance {", "  rankdir=TB;"]
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        if node_id in changed:
            color = "red"
        elif node_id in affected:
            color = "lightblue"
        else:
            color = palette.get(node.kind, "white")
        label = f"{node.kind}\\n{node_id}"
        lines.append(f'  "{node_id}" [label="{label}", style=filled, '
                     f'fillcolor="{color}"];')
    for edge in _sorted_edges(graph.edges):
        lines.append(f'  "{edge.source}" -> "{edge.target}" '
                     f'[label="{edge.relation}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
