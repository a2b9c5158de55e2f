"""Domain coverage validation.

The domain coverage model decomposes the operating domain into parts that
requirements refine into and dataset elements are traced against. These
checks validate both directions of that decomposition: every part reaches a
requirement, every element of every split reaches a part, and no part is so
coarse or so fine that the tracing stops being informative. The coarse/fine
thresholds are configuration, not built-in constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from tracectl.artifact_model import ArtifactKind, TraceKind
from tracectl.diagnostics import (
    Diagnostic,
    UnknownIdError,
    canonical_order,
    error,
    warning,
)
from tracectl.graph_engine import TraceGraph
from tracectl.manifest_io import ProjectConfig

FLAG_TOO_COARSE = "too_coarse"
FLAG_TOO_FINE = "too_fine"
FLAG_UNCOVERED = "uncovered"


@dataclass(frozen=True)
class PartStats:
    """Per-split element counts and requirement links for one domain part."""

    part_id: str
    counts: dict[str, int]
    traced_hlrs: tuple[str, ...]
    flags: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, object]:
        return {
            "id": self.part_id,
            "counts": dict(sorted(self.counts.items())),
            "traced_hlrs": list(self.traced_hlrs),
            "flags": {k: list(v) for k, v in sorted(self.flags.items())},
        }


@dataclass(frozen=True)
class CoverageReport:
    per_split: dict[str, dict[str, float | int]]
    per_hlr: dict[str, int]
    parts: tuple[PartStats, ...]

    def to_dict(self) -> dict[str, object]:
        return {
            "per_split": {k: dict(v) for k, v in sorted(self.per_split.items())},
            "per_hlr": dict(sorted(self.per_hlr.items())),
            "parts": [p.to_dict() for p in self.parts],
        }


def _split_members(graph: TraceGraph, split_id: str) -> list[str]:
    return sorted(
        edge.source
        for edge in graph.incoming(split_id, TraceKind.MEMBER_OF)
        if graph.nodes[edge.source].kind == ArtifactKind.DATASET_ELEMENT
    )


def _covered_parts(graph: TraceGraph, element_id: str) -> set[str]:
    return {
        edge.target
        for edge in graph.outgoing(element_id, TraceKind.COVERS)
        if graph.nodes[edge.target].kind == ArtifactKind.DOMAIN_PART
    }


def check_hlr_domain_coverage(graph: TraceGraph) -> list[Diagnostic]:
    """Both directions between requirements and the domain model: every part
    refines some hlr, every hlr is reached by some part."""
    diagnostics: list[Diagnostic] = []
    for part_id in graph.ids_of_kind(ArtifactKind.DOMAIN_PART):
        refined = [
            edge
            for edge in graph.outgoing(part_id, TraceKind.REFINES)
            if graph.nodes[edge.target].kind == ArtifactKind.HLR
        ]
        if not refined:
            diagnostics.append(
                error(
                    "E_PART_UNTRACED",
                    (part_id,),
                    f"domain_part '{part_id}' refines no hlr; the domain model does "
                    "not connect it to any requirement",
                )
            )
    for hlr_id in graph.ids_of_kind(ArtifactKind.HLR):
        covering = [
            edge
            for edge in graph.incoming(hlr_id, TraceKind.REFINES)
            if graph.nodes[edge.source].kind == ArtifactKind.DOMAIN_PART
        ]
        if not covering:
            diagnostics.append(
                warning(
                    "W_HLR_UNCOVERED",
                    (hlr_id,),
                    f"hlr '{hlr_id}' is refined by no domain_part; its domain may be "
                    "unmodeled",
                )
            )
    return canonical_order(diagnostics)


def check_element_tracing(graph: TraceGraph, split_id: str) -> list[Diagnostic]:
    """Every element of the split must be traced to at least one domain part."""
    split = graph.artifact(split_id)
    if split.kind != ArtifactKind.DATASET_SPLIT:
        raise UnknownIdError(split_id)
    diagnostics = [
        error(
            "E_ELEMENT_UNTRACED",
            (element_id,),
            f"dataset_element '{element_id}' in split '{split_id}' covers no "
            "domain_part",
        )
        for element_id in _split_members(graph, split_id)
        if not _covered_parts(graph, element_id)
    ]
    return diagnostics


def _granularity_flags(count: int, split_total: int, config: ProjectConfig) -> list[str]:
    """Pure flag function for one (part, split) cell."""
    if split_total <= 0:
        return []
    flags: list[str] = []
    if count == 0:
        flags.append(FLAG_UNCOVERED)
    elif count < config.granularity_low:
        flags.append(FLAG_TOO_FINE)
    if count > config.granularity_high_fraction * split_total:
        flags.append(FLAG_TOO_COARSE)
    return flags


def _part_counts(graph: TraceGraph) -> tuple[list[str], dict[str, list[str]], dict[str, dict[str, int]]]:
    part_ids = graph.ids_of_kind(ArtifactKind.DOMAIN_PART)
    split_ids = graph.ids_of_kind(ArtifactKind.DATASET_SPLIT)
    members = {split_id: _split_members(graph, split_id) for split_id in split_ids}
    counts: dict[str, dict[str, int]] = {p: {s: 0 for s in split_ids} for p in part_ids}
    for split_id, element_ids in members.items():
        for element_id in element_ids:
            for part_id in _covered_parts(graph, element_id):
                if part_id in counts:
                    counts[part_id][split_id] += 1
    return part_ids, members, counts


def granularity_diagnostics(
    graph: TraceGraph, config: ProjectConfig
) -> tuple[list[PartStats], list[Diagnostic]]:
    """Per (part, split) statistics with coarse/fine/uncovered warnings."""
    part_ids, members, counts = _part_counts(graph)
    stats: list[PartStats] = []
    diagnostics: list[Diagnostic] = []

    for part_id in part_ids:
        traced_hlrs = tuple(
            sorted(
                edge.target
                for edge in graph.outgoing(part_id, TraceKind.REFINES)
                if graph.nodes[edge.target].kind == ArtifactKind.HLR
            )
        )
        flags: dict[str, tuple[str, ...]] = {}
        for split_id in sorted(members):
            split_total = len(members[split_id])
            count = counts[part_id][split_id]
            cell_flags = _granularity_flags(count, split_total, config)
            if cell_flags:
                flags[split_id] = tuple(cell_flags)
            for flag in cell_flags:
                if flag == FLAG_UNCOVERED:
                    diagnostics.append(
                        warning(
                            "W_PART_UNCOVERED",
                            (part_id, split_id),
                            f"domain_part '{part_id}' has no elements in split "
                            f"'{split_id}'; that situation is not covered",
                        )
                    )
                elif flag == FLAG_TOO_FINE:
                    diagnostics.append(
                        warning(
                            "W_PART_TOO_FINE",
                            (part_id, split_id),
                            f"domain_part '{part_id}' has only {count} element(s) in "
                            f"split '{split_id}' (minimum {config.granularity_low})",
                        )
                    )
                elif flag == FLAG_TOO_COARSE:
                    diagnostics.append(
                        warning(
                            "W_PART_TOO_COARSE",
                            (part_id, split_id),
                            f"domain_part '{part_id}' absorbs {count} of {split_total} "
                            f"elements in split '{split_id}' (above fraction "
                            f"{config.granularity_high_fraction})",
                        )
                    )
        stats.append(
            PartStats(
                part_id=part_id,
                counts=dict(counts[part_id]),
                traced_hlrs=traced_hlrs,
                flags=flags,
            )
        )

    return stats, canonical_order(diagnostics)


def coverage_report(graph: TraceGraph, config: ProjectConfig) -> CoverageReport:
    """Aggregate the coverage checks into percentages and per-part stats."""
    per_split: dict[str, dict[str, float | int]] = {}
    for split_id in graph.ids_of_kind(ArtifactKind.DATASET_SPLIT):
        member_ids = _split_members(graph, split_id)
        total = len(member_ids)
        traced = sum(1 for e in member_ids if _covered_parts(graph, e))
        percent = 100.0 if total == 0 else traced * 100.0 / total
        per_split[split_id] = {"total": total, "traced": traced, "percent": percent}

    per_hlr = {
        hlr_id: len(
            {
                edge.source
                for edge in graph.incoming(hlr_id, TraceKind.REFINES)
                if graph.nodes[edge.source].kind == ArtifactKind.DOMAIN_PART
            }
        )
        for hlr_id in graph.ids_of_kind(ArtifactKind.HLR)
    }

    stats, _ = granularity_diagnostics(graph, config)
    return CoverageReport(per_split=per_split, per_hlr=per_hlr, parts=tuple(stats))
