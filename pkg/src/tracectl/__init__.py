"""tracectl: trace-graph lint tool for DNN development artifacts."""

__version__ = "0.1.0"

from tracectl.artifact_model import (
    Artifact,
    ArtifactKind,
    TraceKind,
    TraceRef,
    required_trace_schema,
    validate_artifact_local,
)
from tracectl.diagnostics import Diagnostic, Severity, UnknownIdError
from tracectl.graph_engine import (
    TraceGraph,
    backward_traces,
    build_graph,
    check_schema_conformance,
    export_dot,
    forward_traces,
    orphans,
)
from tracectl.manifest_io import (
    Project,
    ProjectConfig,
    ProjectLoadError,
    load_project,
    parse_artifact_manifest,
    parse_dataset_index,
    serialize_artifact,
    serialize_report,
)

__all__ = [
    "__version__",
    "Artifact",
    "ArtifactKind",
    "TraceKind",
    "TraceRef",
    "required_trace_schema",
    "validate_artifact_local",
    "Diagnostic",
    "Severity",
    "UnknownIdError",
    "TraceGraph",
    "backward_traces",
    "build_graph",
    "check_schema_conformance",
    "export_dot",
    "forward_traces",
    "orphans",
    "Project",
    "ProjectConfig",
    "ProjectLoadError",
    "load_project",
    "parse_artifact_manifest",
    "parse_dataset_index",
    "serialize_artifact",
    "serialize_report",
]
