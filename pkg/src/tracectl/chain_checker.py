"""Trial-and-error lineage validation.

Model versions link to their predecessor through derived_from edges,
forming a forest rooted (under the strict policy) in catalogue entries.
Each increment must be justified: a rationale on the edge and a strict
metric improvement over the predecessor, judged under the active metric
version. When the metric changes, the whole chain must be re-checkable
under the new version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from tracectl.artifact_model import ArtifactKind, SplitRole, TraceKind
from tracectl.diagnostics import Diagnostic, canonical_order, error, warning
from tracectl.graph_engine import TraceGraph
from tracectl.manifest_io import INCREMENT_POLICY_MODES, ProjectConfig


@dataclass(frozen=True)
class MetricReading:
    value_id: str
    metric_version: int
    value: float
    split: str


@dataclass(frozen=True)
class PredecessorLink:
    target: str
    target_kind: ArtifactKind
    rationale: str | None
    accepted_regression: bool


@dataclass(frozen=True)
class ChainTree:
    """One tree of the forest: a root version, its catalogue anchor (if any),
    and all versions reachable from the root via derived_from children."""

    root: str
    anchor: str | None
    members: tuple[str, ...]
    depth: int
    head: str


@dataclass(frozen=True)
class RunForest:
    trees: tuple[ChainTree, ...]
    parent: dict[str, PredecessorLink | None]
    readings: dict[str, tuple[MetricReading, ...]]
    metric_directions: dict[int, str]
    diagnostics: tuple[Diagnostic, ...] = ()

    def tree_of(self, version_id: str) -> ChainTree | None:
        for tree in self.trees:
            if version_id in tree.members:
                return tree
        return None


@dataclass(frozen=True)
class IncrementPolicy:
    """Restrictions on how a new version may extend the record."""

    mode: str = "catalogue_and_rationale"
    max_edit_ops: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in INCREMENT_POLICY_MODES:
            raise ValueError(f"mode must be one of {INCREMENT_POLICY_MODES}")
        if self.max_edit_ops is not None and self.max_edit_ops < 1:
            raise ValueError("max_edit_ops must be a positive integer")

    @classmethod
    def from_config(cls, config: ProjectConfig) -> IncrementPolicy:
        return cls(mode=config.increment_policy)


def _is_finite_number(value: object) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def _collect_readings(graph: TraceGraph) -> dict[str, tuple[MetricReading, ...]]:
    readings: dict[str, list[MetricReading]] = {}
    for value_id in graph.ids_of_kind(ArtifactKind.METRIC_VALUE):
        artifact = graph.nodes[value_id]
        value = artifact.payload.get("value")
        version = artifact.payload.get("metric_version")
        if not _is_finite_number(value):
            continue  # local validation reports it
        if not isinstance(version, int) or isinstance(version, bool) or version < 1:
            continue
        split = artifact.payload.get("split", SplitRole.VALIDATION.value)
        if split not in (SplitRole.VALIDATION.value, SplitRole.TEST.value):
            split = SplitRole.VALIDATION.value
        for edge in graph.outgoing(value_id, TraceKind.MEASURED_ON):
            if graph.nodes[edge.target].kind == ArtifactKind.MODEL_VERSION:
                readings.setdefault(edge.target, []).append(
                    MetricReading(value_id, version, float(value), split)
                )
    return {
        version_id: tuple(sorted(items, key=lambda r: r.value_id))
        for version_id, items in readings.items()
    }


def _collect_directions(graph: TraceGraph) -> dict[int, str]:
    directions: dict[int, str] = {}
    for definition_id in graph.ids_of_kind(ArtifactKind.METRIC_DEFINITION):
        payload = graph.nodes[definition_id].payload
        version = payload.get("metric_version")
        direction = payload.get("direction")
        if (
            isinstance(version, int)
            and not isinstance(version, bool)
            and version >= 1
            and isinstance(direction, str)
            and version not in directions
        ):
            directions[version] = direction
    return directions


def build_chains(graph: TraceGraph) -> RunForest:
    """Reconstruct the version forest by following derived_from edges.

    Cycles are reported and their members (plus anything descending from
    them) excluded from the trees; the rest partitions into trees whose
    roots either anchor at a catalogue entry or have no predecessor at all.
    """
    versions = graph.ids_of_kind(ArtifactKind.MODEL_VERSION)
    diagnostics: list[Diagnostic] = []

    parent: dict[str, PredecessorLink | None] = {}
    for version_id in versions:
        links = sorted(
            graph.outgoing(version_id, TraceKind.DERIVED_FROM), key=lambda e: e.target
        )
        if not links:
            parent[version_id] = None
            continue
        # schema enforces exactly one; with several, the sorted-first target
        # keeps the forest deterministic while schema flags the rest.
        edge = links[0]
        parent[version_id] = PredecessorLink(
            target=edge.target,
            target_kind=graph.nodes[edge.target].kind,
            rationale=edge.rationale,
            accepted_regression=edge.accepted_regression,
        )

    version_parent = {
        v: link.target
        for v, link in parent.items()
        if link is not None and link.target_kind == ArtifactKind.MODEL_VERSION
    }

    # Walk the functional parent graph: white/grey/black coloring finds the
    # cycles; everything whose ancestry ends in a cycle is stranded.
    state: dict[str, str] = {}
    in_cycle: set[str] = set()
    stranded: set[str] = set()
    cycles: list[list[str]] = []

    for start in versions:
        if start in state:
            continue
        path: list[str] = []
        node: str | None = start
        while node is not None and node not in state:
            state[node] = "grey"
            path.append(node)
            node = version_parent.get(node)
        if node is not None and state.get(node) == "grey":
            cycle = path[path.index(node):]
            cycles.append(cycle)
            in_cycle.update(cycle)
        terminal_bad = node is not None and (node in in_cycle or node in stranded)
        for visited in path:
            state[visited] = "black"
            if visited in in_cycle:
                continue
            if terminal_bad:
                stranded.add(visited)

    for cycle in sorted(cycles, key=min):
        ordered = _rotate_cycle(cycle)
        diagnostics.append(
            error(
                "E_CHAIN_CYCLE",
                tuple(ordered),
                "derived_from cycle: " + " -> ".join(ordered + [ordered[0]]),
            )
        )
    for version_id in sorted(stranded - in_cycle):
        diagnostics.append(
            error(
                "E_CHAIN_NO_ROOT",
                (version_id,),
                f"model_version '{version_id}' descends from a derived_from cycle and "
                "reaches no catalogue entry",
            )
        )

    excluded = in_cycle | stranded
    children: dict[str, list[str]] = {}
    roots: list[str] = []
    for version_id in versions:
        if version_id in excluded:
            continue
        parent_version = version_parent.get(version_id)
        if parent_version is None or parent_version in excluded:
            roots.append(version_id)
        else:
            children.setdefault(parent_version, []).append(version_id)

    trees: list[ChainTree] = []
    for root in sorted(roots):
        members: list[str] = []
        depth_of: dict[str, int] = {root: 1}
        stack = [root]
        while stack:
            node = stack.pop()
            members.append(node)
            for child in sorted(children.get(node, ())):
                depth_of[child] = depth_of[node] + 1
                stack.append(child)
        depth = max(depth_of.values())
        head = max(v for v, d in depth_of.items() if d == depth)
        link = parent[root]
        anchor = (
            link.target
            if link is not None and link.target_kind == ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY
            else None
        )
        trees.append(
            ChainTree(
                root=root,
                anchor=anchor,
                members=tuple(sorted(members)),
                depth=depth,
                head=head,
            )
        )

    return RunForest(
        trees=tuple(trees),
        parent=parent,
        readings=_collect_readings(graph),
        metric_directions=_collect_directions(graph),
        diagnostics=tuple(canonical_order(diagnostics)),
    )


def _rotate_cycle(cycle: list[str]) -> list[str]:
    pivot = cycle.index(min(cycle))
    return cycle[pivot:] + cycle[:pivot]


def check_roots_in_catalogue(forest: RunForest, graph: TraceGraph) -> list[Diagnostic]:
    """Flag trees whose root's predecessor is not a catalogue entry.

    A root with no derived_from edge at all is a schema finding, not a chain
    finding, and stays silent here.
    """
    diagnostics: list[Diagnostic] = []
    for tree in forest.trees:
        link = forest.parent.get(tree.root)
        if link is None or tree.anchor is not None:
            continue
        diagnostics.append(
            error(
                "E_CHAIN_BAD_ROOT",
                (tree.root,),
                f"chain root '{tree.root}' derives from {link.target_kind.value} "
                f"'{link.target}', not a primitive_catalogue_entry",
            )
        )
    return canonical_order(diagnostics)


def check_metric_consistency(graph: TraceGraph, config: ProjectConfig) -> list[Diagnostic]:
    """One active metric definition; every value traced; every version measured."""
    diagnostics: list[Diagnostic] = []
    active = config.active_metric_version

    active_definitions = [
        definition_id
        for definition_id in graph.ids_of_kind(ArtifactKind.METRIC_DEFINITION)
        if graph.nodes[definition_id].payload.get("metric_version") == active
    ]
    if len(active_definitions) > 1:
        diagnostics.append(
            error(
                "E_MULTIPLE_ACTIVE_METRICS",
                tuple(active_definitions),
                f"{len(active_definitions)} metric_definitions share the active "
                f"metric_version {active}; there should be only one metric",
            )
        )

    for value_id in graph.ids_of_kind(ArtifactKind.METRIC_VALUE):
        traced = any(
            graph.nodes[edge.target].kind == ArtifactKind.MODEL_VERSION
            for edge in graph.outgoing(value_id, TraceKind.MEASURED_ON)
        )
        if not traced:
            diagnostics.append(
                error(
                    "E_VALUE_UNTRACED",
                    (value_id,),
                    f"metric_value '{value_id}' is not traced to any model_version",
                )
            )

    readings = _collect_readings(graph)
    for version_id in graph.ids_of_kind(ArtifactKind.MODEL_VERSION):
        if not any(r.metric_version == active for r in readings.get(version_id, ())):
            diagnostics.append(
                warning(
                    "W_VERSION_UNMEASURED",
                    (version_id,),
                    f"model_version '{version_id}' has no metric_value under the "
                    f"active metric_version {active}",
                )
            )

    return canonical_order(diagnostics)


def _comparison_reading(
    forest: RunForest, version_id: str, active: int
) -> tuple[MetricReading, bool] | None:
    """Pick the reading used in improvement comparisons.

    Validation-split readings win; a test-split reading is used only as a
    fallback and flagged by the caller. Ties resolve to the greatest value
    artifact id.
    """
    candidates = [
        r for r in forest.readings.get(version_id, ()) if r.metric_version == active
    ]
    validation = [r for r in candidates if r.split == SplitRole.VALIDATION.value]
    if validation:
        return validation[-1], False
    if candidates:
        return candidates[-1], True
    return None


def check_improvement(forest: RunForest, config: ProjectConfig) -> list[Diagnostic]:
    """Every increment must strictly improve on its predecessor by more than
    the configured epsilon, unless explicitly accepted as a regression."""
    diagnostics: list[Diagnostic] = []
    active = config.active_metric_version
    direction = forest.metric_directions.get(active, config.metric_direction_default.value)
    higher_is_better = direction == "higher_is_better"
    flagged_test: set[str] = set()

    for tree in forest.trees:
        for version_id in tree.members:
            link = forest.parent.get(version_id)
            if link is None or link.target_kind != ArtifactKind.MODEL_VERSION:
                continue
            child = _comparison_reading(forest, version_id, active)
            parent = _comparison_reading(forest, link.target, active)
            if child is None or parent is None:
                continue
            child_reading, child_is_test = child
            parent_reading, parent_is_test = parent
            if child_is_test and version_id not in flagged_test:
                flagged_test.add(version_id)
                diagnostics.append(_test_value_warning(version_id, child_reading))
            if parent_is_test and link.target not in flagged_test:
                flagged_test.add(link.target)
                diagnostics.append(_test_value_warning(link.target, parent_reading))

            delta = (
                child_reading.value - parent_reading.value
                if higher_is_better
                else parent_reading.value - child_reading.value
            )
            if delta > config.improvement_epsilon:
                continue
            detail = (
                f"'{version_id}' scores {child_reading.value} against predecessor "
                f"'{link.target}' at {parent_reading.value} under metric_version "
                f"{active} ({direction}, epsilon {config.improvement_epsilon})"
            )
            if link.accepted_regression and link.rationale and link.rationale.strip():
                diagnostics.append(
                    warning(
                        "W_ACCEPTED_REGRESSION",
                        (version_id, link.target),
                        f"accepted regression: {detail}; rationale: {link.rationale}",
                    )
                )
            else:
                diagnostics.append(
                    error(
                        "E_NON_IMPROVING_INCREMENT",
                        (version_id, link.target),
                        f"increment is not an improvement: {detail}",
                    )
                )

    return canonical_order(diagnostics)


def _test_value_warning(version_id: str, reading: MetricReading) -> Diagnostic:
    return warning(
        "W_TEST_VALUE_IN_CHAIN",
        (version_id,),
        f"model_version '{version_id}' is compared through test-split value "
        f"'{reading.value_id}'; the test set is reserved for the final assessment",
    )


def recheck_chain(
    forest: RunForest, graph: TraceGraph, config: ProjectConfig
) -> list[Diagnostic]:
    """Re-validate every root-to-head path under the active metric version.

    Matches check_improvement exactly when every version carries an
    active-metric value; versions measured only under other metric versions
    break the chain and are reported.
    """
    diagnostics = check_improvement(forest, config)
    active = config.active_metric_version
    for tree in forest.trees:
        for version_id in tree.members:
            readings = forest.readings.get(version_id, ())
            if not readings:
                continue  # never measured at all; W_VERSION_UNMEASURED covers it
            if not any(r.metric_version == active for r in readings):
                other = sorted({r.metric_version for r in readings})
                diagnostics.append(
                    error(
                        "E_CHAIN_BROKEN_UNDER_METRIC",
                        (version_id,),
                        f"model_version '{version_id}' is measured under metric "
                        f"version(s) {other} but not the active version {active}; "
                        "the chain cannot be re-validated",
                    )
                )
    return canonical_order(diagnostics)


def check_increment_policy(
    forest: RunForest, graph: TraceGraph, policy: IncrementPolicy
) -> list[Diagnostic]:
    """Apply the configured increment restrictions."""
    if policy.mode == "none":
        return []
    diagnostics: list[Diagnostic] = []

    for edge in graph.edges:
        if edge.kind != TraceKind.DERIVED_FROM:
            continue
        if edge.rationale is None or not edge.rationale.strip():
            diagnostics.append(
                error(
                    "E_MISSING_RATIONALE",
                    (edge.source,),
                    f"derived_from trace from '{edge.source}' to '{edge.target}' "
                    "carries no justification of the increment",
                )
            )

    if policy.mode == "catalogue_and_rationale":
        diagnostics.extend(check_roots_in_catalogue(forest, graph))

    if policy.max_edit_ops is not None:
        versions = graph.ids_of_kind(ArtifactKind.MODEL_VERSION)
        if versions:
            diagnostics.append(
                warning(
                    "W_POLICY_UNSUPPORTED",
                    tuple(versions),
                    "structural increment diffing (max_edit_ops) is reserved and not "
                    "enforced by this tool",
                )
            )

    return canonical_order(diagnostics)
