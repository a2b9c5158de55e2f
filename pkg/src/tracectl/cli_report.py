"""Command-line front end and report assembly.

``tracectl check`` loads a project, runs every rule, and renders a
deterministic report for CI gating: exit 0 when clean, 1 when violations
reach the --fail-on bar, 2 when the project itself cannot be loaded.
``coverage`` and ``chain`` scope the rules; ``graph`` exports DOT.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

from tracectl import __version__
from tracectl.artifact_model import ArtifactKind, MetricDirection, validate_artifact_local
from tracectl.chain_checker import (
    IncrementPolicy,
    RunForest,
    build_chains,
    check_improvement,
    check_increment_policy,
    check_metric_consistency,
    recheck_chain,
)
from tracectl.coverage_checker import (
    CoverageReport,
    check_element_tracing,
    check_hlr_domain_coverage,
    coverage_report,
    granularity_diagnostics,
)
from tracectl.diagnostics import Diagnostic, Severity, canonical_order
from tracectl.graph_engine import (
    TraceGraph,
    build_graph,
    check_schema_conformance,
    export_dot,
    orphans,
)
from tracectl.manifest_io import (
    Project,
    ProjectConfig,
    ProjectLoadError,
    load_project,
    serialize_report,
)

SUBCOMMANDS = ("check", "coverage", "chain", "graph")

# Rules that restate a schema cardinality hole so that scoped runs stay
# self-contained; in the full suite the schema finding is authoritative and
# these are dropped when the same subject already carries it.
_SCHEMA_SHADOWED_RULES = frozenset(
    {"E_PART_UNTRACED", "E_ELEMENT_UNTRACED", "E_VALUE_UNTRACED"}
)

EXIT_CLEAN = 0
EXIT_VIOLATIONS = 1
EXIT_LOAD_FAILURE = 2


@dataclass(frozen=True)
class VersionEntry:
    id: str
    predecessor: str | None

    def to_dict(self) -> dict[str, object]:
        return {"id": self.id, "predecessor": self.predecessor}


@dataclass(frozen=True)
class ChainSummaryEntry:
    root: str
    depth: int
    head: str
    head_value: float | None
    versions: tuple[VersionEntry, ...]

    def to_dict(self) -> dict[str, object]:
        return {
            "root": self.root,
            "depth": self.depth,
            "head": self.head,
            "head_value": self.head_value,
            "versions": [v.to_dict() for v in self.versions],
        }


@dataclass(frozen=True)
class Report:
    diagnostics: tuple[Diagnostic, ...]
    coverage: CoverageReport
    chain_summary: tuple[ChainSummaryEntry, ...]
    config: ProjectConfig
    tool_version: str = __version__

    @property
    def error_count(self) -> int:
        return sum(1 for d in self.diagnostics if d.severity == Severity.ERROR)

    @property
    def warning_count(self) -> int:
        return sum(1 for d in self.diagnostics if d.severity == Severity.WARNING)

    def to_dict(self) -> dict[str, object]:
        return {
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "summary": {"errors": self.error_count, "warnings": self.warning_count},
            "coverage": self.coverage.to_dict(),
            "chain_summary": [entry.to_dict() for entry in self.chain_summary],
            "config": self.config.to_dict(),
            "tool_version": self.tool_version,
        }


def _chain_summary(forest: RunForest, config: ProjectConfig) -> tuple[ChainSummaryEntry, ...]:
    active = config.active_metric_version
    entries = []
    for tree in forest.trees:
        head_readings = [
            r for r in forest.readings.get(tree.head, ()) if r.metric_version == active
        ]
        head_value = head_readings[-1].value if head_readings else None
        versions = tuple(
            VersionEntry(
                id=version_id,
                predecessor=(
                    forest.parent[version_id].target
                    if forest.parent.get(version_id) is not None
                    else None
                ),
            )
            for version_id in tree.members
        )
        entries.append(
            ChainSummaryEntry(
                root=tree.anchor or tree.root,
                depth=tree.depth,
                head=tree.head,
                head_value=head_value,
                versions=versions,
            )
        )
    return tuple(sorted(entries, key=lambda e: e.root))


def _coverage_diagnostics(graph: TraceGraph, config: ProjectConfig) -> list[Diagnostic]:
    diagnostics = check_hlr_domain_coverage(graph)
    for split_id in graph.ids_of_kind(ArtifactKind.DATASET_SPLIT):
        diagnostics.extend(check_element_tracing(graph, split_id))
    _, granularity = granularity_diagnostics(graph, config)
    diagnostics.extend(granularity)
    return diagnostics


def _chain_diagnostics(
    graph: TraceGraph, forest: RunForest, config: ProjectConfig
) -> list[Diagnostic]:
    diagnostics = list(forest.diagnostics)
    diagnostics.extend(check_metric_consistency(graph, config))
    diagnostics.extend(check_improvement(forest, config))
    diagnostics.extend(check_increment_policy(forest, graph, IncrementPolicy.from_config(config)))
    diagnostics.extend(recheck_chain(forest, graph, config))
    return diagnostics


def _suppress_schema_shadows(diagnostics: list[Diagnostic]) -> list[Diagnostic]:
    schema_subjects = {
        d.subjects[0] for d in diagnostics if d.rule_id == "E_SCHEMA_MISSING_TRACE"
    }
    return [
        d
        for d in diagnostics
        if not (d.rule_id in _SCHEMA_SHADOWED_RULES and d.subjects[0] in schema_subjects)
    ]


def collect_diagnostics(
    project: Project,
    graph: TraceGraph,
    scope: str,
    config: ProjectConfig,
    forest: RunForest | None = None,
) -> list[Diagnostic]:
    """All diagnostics for the given scope, canonically ordered."""
    if forest is None:
        forest = build_chains(graph)
    if scope == "coverage":
        return canonical_order(_coverage_diagnostics(graph, config))
    if scope == "chain":
        return canonical_order(_chain_diagnostics(graph, forest, config))

    diagnostics: list[Diagnostic] = []
    for artifact in project.artifacts:
        diagnostics.extend(validate_artifact_local(artifact))
    diagnostics.extend(graph.diagnostics)
    diagnostics.extend(check_schema_conformance(graph))
    diagnostics.extend(orphans(graph))
    diagnostics.extend(_coverage_diagnostics(graph, config))
    diagnostics.extend(_chain_diagnostics(graph, forest, config))
    return canonical_order(_suppress_schema_shadows(diagnostics))


def _apply_overrides(config: ProjectConfig, args: argparse.Namespace) -> ProjectConfig:
    values = config.to_dict()
    if getattr(args, "metric_version", None) is not None:
        values["active_metric_version"] = args.metric_version
    if getattr(args, "epsilon", None) is not None:
        values["improvement_epsilon"] = args.epsilon
    if getattr(args, "granularity_low", None) is not None:
        values["granularity_low"] = args.granularity_low
    if getattr(args, "granularity_high_fraction", None) is not None:
        values["granularity_high_fraction"] = args.granularity_high_fraction
    values["metric_direction_default"] = MetricDirection(values["metric_direction_default"])
    return ProjectConfig(**values)  # type: ignore[arg-type]


def _exit_code(diagnostics: list[Diagnostic], fail_on: str) -> int:
    errors = sum(1 for d in diagnostics if d.severity == Severity.ERROR)
    warnings = len(diagnostics) - errors
    if errors or (fail_on == "warning" and warnings):
        return EXIT_VIOLATIONS
    return EXIT_CLEAN


def _render_load_error(exc: ProjectLoadError, fmt: str) -> bytes:
    if fmt == "json":
        payload = {
            "error": {
                "rule_id": exc.rule_id,
                "message": exc.message,
                "path": exc.path,
                "pointer": exc.pointer,
                "line": exc.line,
            }
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return f"LOAD FAILED {exc}".encode("utf-8")


def execute(
    name: str,
    project_root: str | Path,
    *,
    fmt: str = "text",
    fail_on: str = "error",
    args: argparse.Namespace | None = None,
) -> tuple[int, bytes]:
    """Run one subcommand and return (exit code, output bytes)."""
    if name not in SUBCOMMANDS:
        return EXIT_LOAD_FAILURE, f"unknown subcommand: {name}".encode("utf-8")
    try:
        project = load_project(project_root)
    except ProjectLoadError as exc:
        return EXIT_LOAD_FAILURE, _render_load_error(exc, fmt)

    config = project.config if args is None else _apply_overrides(project.config, args)
    graph = build_graph(project)

    if name == "graph":
        return EXIT_CLEAN, export_dot(graph).encode("utf-8")

    forest = build_chains(graph)
    diagnostics = collect_diagnostics(project, graph, name, config, forest)
    report = Report(
        diagnostics=tuple(diagnostics),
        coverage=coverage_report(graph, config),
        chain_summary=_chain_summary(forest, config),
        config=config,
    )
    return _exit_code(diagnostics, fail_on), serialize_report(report, fmt)


def run_subcommand(
    name: str,
    project_root: str | Path,
    *,
    fmt: str = "text",
    fail_on: str = "error",
    args: argparse.Namespace | None = None,
    stream: BinaryIO | None = None,
) -> int:
    """Run a subcommand, writing the rendered output to ``stream`` (stdout)."""
    code, output = execute(name, project_root, fmt=fmt, fail_on=fail_on, args=args)
    out = stream if stream is not None else sys.stdout.buffer
    out.write(output)
    if not output.endswith(b"\n"):
        out.write(b"\n")
    out.flush()
    return code


def run_check(
    project_root: str | Path,
    *,
    fmt: str = "text",
    fail_on: str = "error",
    args: argparse.Namespace | None = None,
    stream: BinaryIO | None = None,
) -> int:
    """Full rule suite over a project directory."""
    return run_subcommand(
        "check", project_root, fmt=fmt, fail_on=fail_on, args=args, stream=stream
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracectl",
        description="Validate the trace graph of a DNN development record.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("check", "run the full rule suite"),
        ("coverage", "run domain coverage rules only"),
        ("chain", "run trial-and-error chain rules only"),
        ("graph", "export the trace graph as DOT"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--project", required=True, help="project directory")
        cmd.add_argument("--format", choices=("text", "json"), default="text")
        cmd.add_argument("--fail-on", choices=("error", "warning"), default="error")
        cmd.add_argument("--metric-version", type=int, default=None)
        cmd.add_argument("--epsilon", type=float, default=None)
        cmd.add_argument("--granularity-low", type=int, default=None)
        cmd.add_argument("--granularity-high-fraction", type=float, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return run_subcommand(
        args.command,
        args.project,
        fmt=args.format,
        fail_on=args.fail_on,
        args=args,
    )


if __name__ == "__main__":
    raise SystemExit(main())
