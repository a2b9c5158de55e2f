"""Immutable trace graph: construction, queries, schema conformance, export.

The graph makes every declared dependency explicit and queryable in both
directions. A dangling edge degrades to a diagnostic rather than aborting
the build, so one bad manifest does not hide all other findings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from tracectl.artifact_model import (
    Artifact,
    ArtifactKind,
    Cardinality,
    RULES_BY_TRACE_KIND,
    TraceKind,
    TraceSchemaRule,
)
from tracectl.diagnostics import (
    Diagnostic,
    UnknownIdError,
    canonical_order,
    error,
    warning,
)
from tracectl.manifest_io import Project


@dataclass(frozen=True)
class Edge:
    source: str
    kind: TraceKind
    target: str
    rationale: str | None = None
    accepted_regression: bool = False


@dataclass(frozen=True)
class TraceGraph:
    """All artifacts and resolvable edges, indexed for adjacency queries."""

    nodes: dict[str, Artifact]
    edges: tuple[Edge, ...]
    diagnostics: tuple[Diagnostic, ...] = ()
    _out: dict[str, tuple[Edge, ...]] = field(default_factory=dict, repr=False)
    _in: dict[str, tuple[Edge, ...]] = field(default_factory=dict, repr=False)

    def artifact(self, artifact_id: str) -> Artifact:
        try:
            return self.nodes[artifact_id]
        except KeyError:
            raise UnknownIdError(artifact_id) from None

    def outgoing(self, artifact_id: str, kind: TraceKind | None = None) -> tuple[Edge, ...]:
        edges = self._out.get(artifact_id, ())
        if kind is None:
            return edges
        return tuple(e for e in edges if e.kind == kind)

    def incoming(self, artifact_id: str, kind: TraceKind | None = None) -> tuple[Edge, ...]:
        edges = self._in.get(artifact_id, ())
        if kind is None:
            return edges
        return tuple(e for e in edges if e.kind == kind)

    def ids_of_kind(self, kind: ArtifactKind) -> list[str]:
        return sorted(a.id for a in self.nodes.values() if a.kind == kind)


def build_graph(project: Project) -> TraceGraph:
    """Index the project; duplicate edges collapse (first rationale kept),
    dangling edges are dropped with a diagnostic."""
    nodes = {artifact.id: artifact for artifact in project.artifacts}
    diagnostics: list[Diagnostic] = []
    edges: list[Edge] = []
    seen: set[tuple[str, TraceKind, str]] = set()

    for artifact in project.artifacts:
        for trace in artifact.traces:
            if trace.target not in nodes:
                diagnostics.append(
                    error(
                        "E_DANGLING_TARGET",
                        (artifact.id,),
                        f"trace {trace.kind.value} of '{artifact.id}' targets unknown "
                        f"artifact '{trace.target}'",
                    )
                )
                continue
            key = (artifact.id, trace.kind, trace.target)
            if key in seen:
                diagnostics.append(
                    warning(
                        "W_DUP_EDGE",
                        (artifact.id,),
                        f"duplicate trace {trace.kind.value} from '{artifact.id}' to "
                        f"'{trace.target}' collapsed",
                    )
                )
                continue
            seen.add(key)
            edges.append(
                Edge(
                    source=artifact.id,
                    kind=trace.kind,
                    target=trace.target,
                    rationale=trace.rationale,
                    accepted_regression=trace.accepted_regression,
                )
            )

    out: dict[str, list[Edge]] = {}
    incoming: dict[str, list[Edge]] = {}
    for edge in edges:
        out.setdefault(edge.source, []).append(edge)
        incoming.setdefault(edge.target, []).append(edge)

    return TraceGraph(
        nodes=nodes,
        edges=tuple(edges),
        diagnostics=tuple(canonical_order(diagnostics)),
        _out={k: tuple(v) for k, v in out.items()},
        _in={k: tuple(v) for k, v in incoming.items()},
    )


def forward_traces(
    graph: TraceGraph, artifact_id: str, kind_filter: TraceKind | None = None
) -> list[str]:
    """Targets of outgoing edges, optionally filtered by kind, sorted by id."""
    graph.artifact(artifact_id)
    return sorted({e.target for e in graph.outgoing(artifact_id, kind_filter)})


def backward_traces(
    graph: TraceGraph, artifact_id: str, kind_filter: TraceKind | None = None
) -> list[str]:
    """Sources of incoming edges, optionally filtered by kind, sorted by id."""
    graph.artifact(artifact_id)
    return sorted({e.source for e in graph.incoming(artifact_id, kind_filter)})


def _split_role(artifact: Artifact) -> str | None:
    role = artifact.payload.get("split_role")
    return role if isinstance(role, str) else None


def _edge_matches_rule(graph: TraceGraph, edge: Edge, rule: TraceSchemaRule) -> bool:
    source = graph.nodes[edge.source]
    target = graph.nodes[edge.target]
    if source.kind != rule.source_kind or target.kind not in rule.target_kinds:
        return False
    if rule.target_split_roles is not None and target.kind == ArtifactKind.DATASET_SPLIT:
        return _split_role(target) in {r.value for r in rule.target_split_roles}
    return True


def _edge_counts_for_rule(graph: TraceGraph, edge: Edge, rule: TraceSchemaRule) -> bool:
    if not _edge_matches_rule(graph, edge, rule):
        return False
    return graph.nodes[edge.target].kind in rule.counted_target_kinds


def _describe_targets(rule: TraceSchemaRule) -> str:
    kinds = " or ".join(k.value for k in rule.counted_target_kinds)
    if rule.target_split_roles is not None:
        roles = "|".join(r.value for r in rule.target_split_roles)
        kinds = f"{kinds}[{roles}]"
    return kinds


def check_schema_conformance(graph: TraceGraph) -> list[Diagnostic]:
    """Check every node against the mandatory rule table and every edge
    against its trace kind's signature."""
    diagnostics: list[Diagnostic] = []

    for artifact_id in sorted(graph.nodes):
        artifact = graph.nodes[artifact_id]
        for rule in RULES_BY_TRACE_KIND.values():
            if rule.source_kind != artifact.kind or not rule.mandatory:
                continue
            count = sum(
                1
                for edge in graph.outgoing(artifact_id, rule.trace_kind)
                if _edge_counts_for_rule(graph, edge, rule)
            )
            violated = (
                count == 0
                if rule.cardinality == Cardinality.AT_LEAST_ONE
                else count != 1
                if rule.cardinality == Cardinality.EXACTLY_ONE
                else count > 1
                if rule.cardinality == Cardinality.AT_MOST_ONE
                else False
            )
            if violated:
                wanted = (
                    "at least one"
                    if rule.cardinality == Cardinality.AT_LEAST_ONE
                    else "exactly one"
                    if rule.cardinality == Cardinality.EXACTLY_ONE
                    else "at most one"
                )
                diagnostics.append(
                    error(
                        "E_SCHEMA_MISSING_TRACE",
                        (artifact_id,),
                        f"{artifact.kind.value} '{artifact_id}' must have {wanted} "
                        f"{rule.trace_kind.value} trace to {_describe_targets(rule)} "
                        f"(found {count})",
                    )
                )

    for edge in graph.edges:
        rule = RULES_BY_TRACE_KIND[edge.kind]
        if not _edge_matches_rule(graph, edge, rule):
            source_kind = graph.nodes[edge.source].kind.value
            target_kind = graph.nodes[edge.target].kind.value
            diagnostics.append(
                error(
                    "E_SCHEMA_BAD_SIGNATURE",
                    (edge.source, edge.target),
                    f"trace {edge.kind.value} from {source_kind} '{edge.source}' to "
                    f"{target_kind} '{edge.target}' does not match the schema "
                    f"signature {rule.source_kind.value} -> {_describe_targets(rule)}",
                )
            )

    return canonical_order(diagnostics)


def orphans(graph: TraceGraph) -> list[Diagnostic]:
    """Warn on every artifact with no incoming and no outgoing traces."""
    diagnostics = [
        warning(
            "W_ORPHAN",
            (artifact_id,),
            f"{graph.nodes[artifact_id].kind.value} '{artifact_id}' has no incoming or "
            "outgoing traces",
        )
        for artifact_id in sorted(graph.nodes)
        if not graph.outgoing(artifact_id) and not graph.incoming(artifact_id)
    ]
    return diagnostics


def export_dot(graph: TraceGraph) -> str:
    """Deterministic DOT rendering: nodes and edges sorted, labels carry kinds."""
    lines = ["digraph trace {"]
    for artifact_id in sorted(graph.nodes):
        kind = graph.nodes[artifact_id].kind.value
        lines.append(f'  "{artifact_id}" [label="{artifact_id}\\n[{kind}]"];')
    for edge in sorted(graph.edges, key=lambda e: (e.source, e.target, e.kind.value)):
        lines.append(f'  "{edge.source}" -> "{edge.target}" [label="{edge.kind.value}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
