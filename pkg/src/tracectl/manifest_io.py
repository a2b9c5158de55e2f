"""Project directory loading and the bit-exact file formats.

A project directory holds ``trace-project.json`` (thresholds and policy),
``artifacts/*.json`` manifests (closed schema: unknown keys are rejected so
typos surface as errors), and an optional ``dataset-index.csv`` listing one
dataset element per row. Elements from the index are synthesized into
artifacts indistinguishable from manifest ones.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from tracectl.artifact_model import (
    Artifact,
    ArtifactKind,
    MetricDirection,
    TraceKind,
    TraceRef,
    is_valid_id,
)

CONFIG_FILE_NAME = "trace-project.json"
ARTIFACT_DIR_NAME = "artifacts"
INDEX_FILE_NAME = "dataset-index.csv"

_MANIFEST_REQUIRED_KEYS = ("id", "kind", "name", "content_hash")
_MANIFEST_ALLOWED_KEYS = frozenset((*_MANIFEST_REQUIRED_KEYS, "payload", "traces"))
_TRACE_ALLOWED_KEYS = frozenset(("kind", "target", "rationale", "accepted_regression"))
_CONFIG_ALLOWED_KEYS = frozenset(
    (
        "metric_direction_default",
        "improvement_epsilon",
        "granularity_low",
        "granularity_high_fraction",
        "increment_policy",
        "active_metric_version",
    )
)

INCREMENT_POLICY_MODES = ("none", "rationale_only", "catalogue_and_rationale")


class ProjectLoadError(Exception):
    """Load-aborting failure: unreadable file, malformed content, duplicate id.

    ``rule_id`` is one of E_IO, E_PARSE, E_DUP_ID. Every parse error carries a
    location: a file path plus a line number or a JSON pointer.
    """

    def __init__(
        self,
        rule_id: str,
        message: str,
        *,
        path: str | None = None,
        pointer: str | None = None,
        line: int | None = None,
    ):
        self.rule_id = rule_id
        self.message = message
        self.path = path
        self.pointer = pointer
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.path or ""
        if self.line is not None:
            where = f"{where}:{self.line}" if where else f"line {self.line}"
        if self.pointer is not None:
            where = f"{where}{self.pointer}" if where else self.pointer
        prefix = f"{self.rule_id} {where}: " if where else f"{self.rule_id}: "
        return prefix + self.message


@dataclass(frozen=True)
class ProjectConfig:
    """Thresholds and policy knobs; all reproducible from the project dir."""

    metric_direction_default: MetricDirection = MetricDirection.HIGHER_IS_BETTER
    improvement_epsilon: float = 0.0
    granularity_low: int = 1
    granularity_high_fraction: float = 0.2
    increment_policy: str = "catalogue_and_rationale"
    active_metric_version: int = 1

    def __post_init__(self) -> None:
        if self.improvement_epsilon < 0:
            raise ValueError("improvement_epsilon must be >= 0")
        if not (0 < self.granularity_high_fraction <= 1):
            raise ValueError("granularity_high_fraction must be in (0, 1]")
        if self.granularity_low < 0:
            raise ValueError("granularity_low must be >= 0")
        if self.increment_policy not in INCREMENT_POLICY_MODES:
            raise ValueError(f"increment_policy must be one of {INCREMENT_POLICY_MODES}")
        if self.active_metric_version < 1:
            raise ValueError("active_metric_version must be >= 1")

    def to_dict(self) -> dict[str, object]:
        return {
            "metric_direction_default": self.metric_direction_default.value,
            "improvement_epsilon": self.improvement_epsilon,
            "granularity_low": self.granularity_low,
            "granularity_high_fraction": self.granularity_high_fraction,
            "increment_policy": self.increment_policy,
            "active_metric_version": self.active_metric_version,
        }


@dataclass(frozen=True)
class Project:
    config: ProjectConfig
    artifacts: tuple[Artifact, ...]
    element_index: dict[str, tuple[str, tuple[str, ...]]] = field(default_factory=dict)


def _reject_nonfinite(value: str) -> float:
    # json accepts bare NaN/Infinity; keep them as floats so local validation
    # reports them as nonfinite instead of a parse failure.
    return float(value)


def _load_json(document: bytes, *, path: str | None = None) -> object:
    try:
        text = document.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProjectLoadError("E_PARSE", f"not valid UTF-8: {exc}", path=path) from exc
    try:
        return json.loads(text, parse_constant=_reject_nonfinite)
    except json.JSONDecodeError as exc:
        raise ProjectLoadError(
            "E_PARSE", f"malformed JSON: {exc.msg}", path=path, line=exc.lineno
        ) from exc


def parse_artifact_manifest(document: bytes, *, path: str | None = None) -> Artifact:
    """Parse one manifest; closed schema, errors carry a JSON pointer."""
    data = _load_json(document, path=path)
    if not isinstance(data, dict):
        raise ProjectLoadError("E_PARSE", "manifest root must be an object", path=path, pointer="")

    unknown = sorted(set(data) - _MANIFEST_ALLOWED_KEYS)
    if unknown:
        raise ProjectLoadError(
            "E_PARSE", f"unknown key {unknown[0]!r}", path=path, pointer=f"/{unknown[0]}"
        )
    for key in _MANIFEST_REQUIRED_KEYS:
        if key not in data:
            raise ProjectLoadError(
                "E_PARSE", f"missing required key {key!r}", path=path, pointer=f"/{key}"
            )

    artifact_id = data["id"]
    if not isinstance(artifact_id, str) or not is_valid_id(artifact_id):
        raise ProjectLoadError(
            "E_PARSE",
            "id must be a non-empty string of letters, digits, '_', '-', '.'",
            path=path,
            pointer="/id",
        )

    kind_raw = data["kind"]
    try:
        kind = ArtifactKind(kind_raw)
    except ValueError:
        raise ProjectLoadError(
            "E_PARSE", f"unknown artifact kind {kind_raw!r}", path=path, pointer="/kind"
        ) from None

    name = data["name"]
    if not isinstance(name, str):
        raise ProjectLoadError("E_PARSE", "name must be a string", path=path, pointer="/name")

    content_hash = data["content_hash"]
    if not isinstance(content_hash, str):
        raise ProjectLoadError(
            "E_PARSE", "content_hash must be a string", path=path, pointer="/content_hash"
        )

    payload = data.get("payload", {})
    if not isinstance(payload, dict):
        raise ProjectLoadError(
            "E_PARSE", "payload must be an object", path=path, pointer="/payload"
        )

    traces_raw = data.get("traces", [])
    if not isinstance(traces_raw, list):
        raise ProjectLoadError("E_PARSE", "traces must be an array", path=path, pointer="/traces")

    traces: list[TraceRef] = []
    for index, entry in enumerate(traces_raw):
        where = f"/traces/{index}"
        if not isinstance(entry, dict):
            raise ProjectLoadError(
                "E_PARSE", "trace entry must be an object", path=path, pointer=where
            )
        entry_unknown = sorted(set(entry) - _TRACE_ALLOWED_KEYS)
        if entry_unknown:
            raise ProjectLoadError(
                "E_PARSE",
                f"unknown key {entry_unknown[0]!r}",
                path=path,
                pointer=f"{where}/{entry_unknown[0]}",
            )
        try:
            trace_kind = TraceKind(entry.get("kind"))
        except ValueError:
            raise ProjectLoadError(
                "E_PARSE",
                f"unknown trace kind {entry.get('kind')!r}",
                path=path,
                pointer=f"{where}/kind",
            ) from None
        target = entry.get("target")
        if not isinstance(target, str) or not is_valid_id(target):
            raise ProjectLoadError(
                "E_PARSE", "trace target must be a valid id", path=path, pointer=f"{where}/target"
            )
        rationale = entry.get("rationale")
        if rationale is not None and not isinstance(rationale, str):
            raise ProjectLoadError(
                "E_PARSE",
                "rationale must be a string",
                path=path,
                pointer=f"{where}/rationale",
            )
        accepted = entry.get("accepted_regression", False)
        if not isinstance(accepted, bool):
            raise ProjectLoadError(
                "E_PARSE",
                "accepted_regression must be a boolean",
                path=path,
                pointer=f"{where}/accepted_regression",
            )
        traces.append(TraceRef(trace_kind, target, rationale, accepted))

    return Artifact(
        id=artifact_id,
        kind=kind,
        name=name,
        content_hash=content_hash,
        payload=payload,
        traces=tuple(traces),
    )


def serialize_artifact(artifact: Artifact) -> bytes:
    """Canonical manifest bytes; parse_artifact_manifest round-trips them."""
    traces = []
    for trace in artifact.traces:
        entry: dict[str, object] = {"kind": trace.kind.value, "target": trace.target}
        if trace.rationale is not None:
            entry["rationale"] = trace.rationale
        if trace.accepted_regression:
            entry["accepted_regression"] = True
        traces.append(entry)
    document = {
        "id": artifact.id,
        "kind": artifact.kind.value,
        "name": artifact.name,
        "content_hash": artifact.content_hash,
        "payload": artifact.payload,
        "traces": traces,
    }
    return (
        json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    ).encode("utf-8")


def parse_dataset_index(stream: bytes, *, path: str | None = None) -> list[tuple[str, str, list[str]]]:
    """Parse the element index: ``element_id,split_id,part_id(;part_id)*``.

    ``#`` starts a comment line; blank lines are skipped; an empty part list
    is allowed syntactically (the element is then untraced, which the
    coverage checker reports).
    """
    return [(element, split, parts) for _, element, split, parts in _parse_index_rows(stream, path=path)]


def _parse_index_rows(
    stream: bytes, *, path: str | None = None
) -> list[tuple[int, str, str, list[str]]]:
    try:
        text = stream.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProjectLoadError("E_PARSE", f"not valid UTF-8: {exc}", path=path) from exc

    rows: list[tuple[int, str, str, list[str]]] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ProjectLoadError(
                "E_PARSE",
                f"expected 3 comma-separated fields, found {len(fields)}",
                path=path,
                line=lineno,
            )
        element_id, split_id, parts_field = (f.strip() for f in fields)
        if not is_valid_id(element_id):
            raise ProjectLoadError(
                "E_PARSE", f"invalid element id {element_id!r}", path=path, line=lineno
            )
        if not is_valid_id(split_id):
            raise ProjectLoadError(
                "E_PARSE", f"invalid split id {split_id!r}", path=path, line=lineno
            )
        part_ids: list[str] = []
        if parts_field:
            for part in parts_field.split(";"):
                part = part.strip()
                if not is_valid_id(part):
                    raise ProjectLoadError(
                        "E_PARSE", f"invalid part id {part!r}", path=path, line=lineno
                    )
                part_ids.append(part)
        rows.append((lineno, element_id, split_id, part_ids))
    return rows


def synthesize_element(element_id: str, split_id: str, part_ids: Iterable[str]) -> Artifact:
    """Build the dataset_element artifact for one index row.

    The content hash is a digest of the row itself, so repeated loads agree.
    """
    parts = tuple(part_ids)
    row = f"{element_id},{split_id},{';'.join(parts)}"
    digest = hashlib.sha256(row.encode("utf-8")).hexdigest()
    traces = [TraceRef(TraceKind.MEMBER_OF, split_id)]
    traces.extend(TraceRef(TraceKind.COVERS, part) for part in parts)
    return Artifact(
        id=element_id,
        kind=ArtifactKind.DATASET_ELEMENT,
        name=element_id,
        content_hash=digest,
        payload={},
        traces=tuple(traces),
    )


def _parse_config(document: bytes, *, path: str) -> ProjectConfig:
    data = _load_json(document, path=path)
    if not isinstance(data, dict):
        raise ProjectLoadError("E_PARSE", "config root must be an object", path=path, pointer="")
    unknown = sorted(set(data) - _CONFIG_ALLOWED_KEYS)
    if unknown:
        raise ProjectLoadError(
            "E_PARSE", f"unknown key {unknown[0]!r}", path=path, pointer=f"/{unknown[0]}"
        )

    kwargs: dict[str, object] = {}
    if "metric_direction_default" in data:
        try:
            kwargs["metric_direction_default"] = MetricDirection(data["metric_direction_default"])
        except ValueError:
            raise ProjectLoadError(
                "E_PARSE",
                f"invalid metric direction {data['metric_direction_default']!r}",
                path=path,
                pointer="/metric_direction_default",
            ) from None
    for key, want_int in (
        ("improvement_epsilon", False),
        ("granularity_low", True),
        ("granularity_high_fraction", False),
        ("active_metric_version", True),
    ):
        if key not in data:
            continue
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ProjectLoadError(
                "E_PARSE", f"{key} must be a number", path=path, pointer=f"/{key}"
            )
        if want_int:
            if not isinstance(value, int):
                raise ProjectLoadError(
                    "E_PARSE", f"{key} must be an integer", path=path, pointer=f"/{key}"
                )
            kwargs[key] = value
        else:
            value = float(value)
            if not math.isfinite(value):
                raise ProjectLoadError(
                    "E_PARSE", f"{key} must be finite", path=path, pointer=f"/{key}"
                )
            kwargs[key] = value
    if "increment_policy" in data:
        kwargs["increment_policy"] = data["increment_policy"]

    try:
        return ProjectConfig(**kwargs)  # type: ignore[arg-type]
    except (TypeError, ValueError) as exc:
        raise ProjectLoadError("E_PARSE", str(exc), path=path, pointer="") from exc


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ProjectLoadError("E_IO", f"cannot read file: {exc}", path=str(path)) from exc


def load_project(root_path: str | Path) -> Project:
    """Load a project directory into an immutable Project.

    Directory enumeration order never affects the result: artifacts are
    sorted by id after the merge. Duplicate ids abort the load naming both
    defining files.
    """
    root = Path(root_path)
    config_path = root / CONFIG_FILE_NAME
    if not config_path.is_file():
        raise ProjectLoadError("E_IO", "missing trace-project.json", path=str(config_path))
    config = _parse_config(_read_bytes(config_path), path=str(config_path))

    artifacts: dict[str, Artifact] = {}
    defined_at: dict[str, str] = {}

    artifact_dir = root / ARTIFACT_DIR_NAME
    if artifact_dir.is_dir():
        for manifest_path in sorted(artifact_dir.glob("*.json")):
            artifact = parse_artifact_manifest(
                _read_bytes(manifest_path), path=str(manifest_path)
            )
            if artifact.id in artifacts:
                raise ProjectLoadError(
                    "E_DUP_ID",
                    f"id '{artifact.id}' defined in both {defined_at[artifact.id]} "
                    f"and {manifest_path}",
                    path=str(manifest_path),
                )
            artifacts[artifact.id] = artifact
            defined_at[artifact.id] = str(manifest_path)

    element_index: dict[str, tuple[str, tuple[str, ...]]] = {}
    index_path = root / INDEX_FILE_NAME
    if index_path.is_file():
        rows = _parse_index_rows(_read_bytes(index_path), path=str(index_path))
        for lineno, element_id, split_id, part_ids in rows:
            location = f"{index_path}:{lineno}"
            if element_id in artifacts:
                raise ProjectLoadError(
                    "E_DUP_ID",
                    f"id '{element_id}' defined in both {defined_at[element_id]} "
                    f"and {location}",
                    path=str(index_path),
                )
            artifacts[element_id] = synthesize_element(element_id, split_id, part_ids)
            defined_at[element_id] = location
            element_index[element_id] = (split_id, tuple(part_ids))

    ordered = tuple(artifacts[key] for key in sorted(artifacts))
    return Project(config=config, artifacts=ordered, element_index=element_index)


def serialize_report(report, fmt: str = "json") -> bytes:
    """Render a Report deterministically.

    JSON mode: sorted keys, compact separators, LF only. Text mode: one line
    per diagnostic followed by coverage, chain, and summary sections.
    Diagnostics are emitted sorted by (rule id, first subject, message)
    regardless of insertion order.
    """
    if fmt == "json":
        return json.dumps(
            report.to_dict(),
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
            allow_nan=False,
        ).encode("utf-8")
    if fmt == "text":
        return _render_text(report).encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


def _render_text(report) -> str:
    lines: list[str] = []
    for diag in sorted(report.diagnostics, key=lambda d: d.sort_key):
        severity = "ERROR" if diag.severity.value == "error" else "WARN"
        lines.append(f"{severity} {diag.rule_id} [{', '.join(diag.subjects)}] {diag.message}")
    coverage = report.coverage
    for split_id in sorted(coverage.per_split):
        stats = coverage.per_split[split_id]
        lines.append(
            f"coverage {split_id}: {stats['traced']}/{stats['total']} traced "
            f"({stats['percent']:.1f}%)"
        )
    for entry in report.chain_summary:
        head_value = "n/a" if entry.head_value is None else f"{entry.head_value}"
        lines.append(
            f"chain {entry.root}: depth {entry.depth}, head {entry.head}, "
            f"value {head_value}"
        )
    errors = sum(1 for d in report.diagnostics if d.severity.value == "error")
    warnings = len(report.diagnostics) - errors
    lines.append(f"summary: {errors} error(s), {warnings} warning(s)")
    return "\n".join(lines) + "\n"
