"""Artifact vocabulary for DNN development records.

An artifact is one node of the development record (a requirement, a domain
part, a dataset element or split, an architecture, a learning configuration,
trained weights, a metric definition or value, a test result, or a catalogue
entry). Traces are directed, kind-tagged dependencies from a refining
artifact to the one it refines. The built-in schema table states which
traces each kind must carry, and with what cardinality.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from tracectl.diagnostics import Diagnostic, canonical_order, error

ID_PATTERN = re.compile(r"^[A-Za-z0-9_.\-]+$")
CONTENT_HASH_PATTERN = re.compile(r"^[0-9a-f]{64}$")


def is_valid_id(value: str) -> bool:
    return bool(value) and ID_PATTERN.match(value) is not None


class ArtifactKind(str, Enum):
    HLR = "hlr"
    DOMAIN_PART = "domain_part"
    DATASET_ELEMENT = "dataset_element"
    DATASET_SPLIT = "dataset_split"
    DNN_ARCHITECTURE = "dnn_architecture"
    LEARNING_CONFIGURATION = "learning_configuration"
    MODEL_VERSION = "model_version"
    INFERENCE_ARCHITECTURE = "inference_architecture"
    METRIC_DEFINITION = "metric_definition"
    METRIC_VALUE = "metric_value"
    TEST_RESULT = "test_result"
    PRIMITIVE_CATALOGUE_ENTRY = "primitive_catalogue_entry"


class TraceKind(str, Enum):
    REFINES = "refines"
    COVERS = "covers"
    MEMBER_OF = "member_of"
    TRAINED_ON = "trained_on"
    CONFIGURED_BY = "configured_by"
    INSTANTIATES = "instantiates"
    DERIVED_FROM = "derived_from"
    EXPORTS = "exports"
    MEASURED_ON = "measured_on"
    DEFINED_BY = "defined_by"
    EVIDENCES = "evidences"


class SplitRole(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class MetricDirection(str, Enum):
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"


class Cardinality(str, Enum):
    EXACTLY_ONE = "exactly_one"
    AT_LEAST_ONE = "at_least_one"
    AT_MOST_ONE = "at_most_one"
    ANY = "any"


@dataclass(frozen=True)
class TraceRef:
    """One outgoing trace as declared by an artifact manifest."""

    kind: TraceKind
    target: str
    rationale: str | None = None
    accepted_regression: bool = False


@dataclass(frozen=True)
class Artifact:
    id: str
    kind: ArtifactKind
    name: str
    content_hash: str
    payload: dict = field(default_factory=dict)
    traces: tuple[TraceRef, ...] = ()

    def traces_of(self, kind: TraceKind) -> tuple[TraceRef, ...]:
        return tuple(t for t in self.traces if t.kind == kind)


@dataclass(frozen=True)
class TraceSchemaRule:
    """Cardinality contract for one trace kind.

    ``target_kinds`` are the admissible target kinds for the signature check;
    ``counted_target_kinds`` are the kinds counted against the cardinality
    (they differ only for measured_on, where an extra edge to the inference
    architecture is allowed alongside the mandatory one to the weights).
    ``target_split_roles`` restricts dataset_split targets to given roles.
    """

    source_kind: ArtifactKind
    trace_kind: TraceKind
    target_kinds: tuple[ArtifactKind, ...]
    cardinality: Cardinality
    mandatory: bool
    counted_target_kinds: tuple[ArtifactKind, ...]
    target_split_roles: tuple[SplitRole, ...] | None = None


def _rule(
    source: ArtifactKind,
    trace: TraceKind,
    targets: tuple[ArtifactKind, ...],
    cardinality: Cardinality,
    *,
    counted: tuple[ArtifactKind, ...] | None = None,
    roles: tuple[SplitRole, ...] | None = None,
) -> TraceSchemaRule:
    return TraceSchemaRule(
        source_kind=source,
        trace_kind=trace,
        target_kinds=targets,
        cardinality=cardinality,
        mandatory=True,
        counted_target_kinds=counted if counted is not None else targets,
        target_split_roles=roles,
    )


_SCHEMA_RULES: tuple[TraceSchemaRule, ...] = (
    _rule(
        ArtifactKind.DOMAIN_PART,
        TraceKind.REFINES,
        (ArtifactKind.HLR,),
        Cardinality.AT_LEAST_ONE,
    ),
    _rule(
        ArtifactKind.DATASET_ELEMENT,
        TraceKind.COVERS,
        (ArtifactKind.DOMAIN_PART,),
        Cardinality.AT_LEAST_ONE,
    ),
    _rule(
        ArtifactKind.DATASET_ELEMENT,
        TraceKind.MEMBER_OF,
        (ArtifactKind.DATASET_SPLIT,),
        Cardinality.EXACTLY_ONE,
    ),
    _rule(
        ArtifactKind.MODEL_VERSION,
        TraceKind.TRAINED_ON,
        (ArtifactKind.DATASET_SPLIT,),
        Cardinality.EXACTLY_ONE,
        roles=(SplitRole.TRAIN,),
    ),
    _rule(
        ArtifactKind.MODEL_VERSION,
        TraceKind.CONFIGURED_BY,
        (ArtifactKind.LEARNING_CONFIGURATION,),
        Cardinality.EXACTLY_ONE,
    ),
    _rule(
        ArtifactKind.MODEL_VERSION,
        TraceKind.INSTANTIATES,
        (ArtifactKind.DNN_ARCHITECTURE,),
        Cardinality.EXACTLY_ONE,
    ),
    _rule(
        ArtifactKind.MODEL_VERSION,
        TraceKind.DERIVED_FROM,
        (ArtifactKind.MODEL_VERSION, ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
        Cardinality.EXACTLY_ONE,
    ),
    _rule(
        ArtifactKind.INFERENCE_ARCHITECTURE,
        TraceKind.EXPORTS,
        (ArtifactKind.DNN_ARCHITECTURE,),
        Cardinality.EXACTLY_ONE,
    ),
    _rule(
        ArtifactKind.METRIC_VALUE,
        TraceKind.MEASURED_ON,
        (ArtifactKind.MODEL_VERSION, ArtifactKind.INFERENCE_ARCHITECTURE),
        Cardinality.EXACTLY_ONE,
        counted=(ArtifactKind.MODEL_VERSION,),
    ),
    _rule(
        ArtifactKind.METRIC_VALUE,
        TraceKind.DEFINED_BY,
        (ArtifactKind.METRIC_DEFINITION,),
        Cardinality.EXACTLY_ONE,
    ),
    _rule(
        ArtifactKind.TEST_RESULT,
        TraceKind.EVIDENCES,
        (ArtifactKind.DATASET_SPLIT,),
        Cardinality.EXACTLY_ONE,
        roles=(SplitRole.VALIDATION, SplitRole.TEST),
    ),
)

RULES_BY_TRACE_KIND: dict[TraceKind, TraceSchemaRule] = {
    rule.trace_kind: rule for rule in _SCHEMA_RULES
}


def required_trace_schema() -> list[TraceSchemaRule]:
    """Return the fixed rule table; one rule per trace kind."""
    return list(_SCHEMA_RULES)


def _is_finite_number(value: object) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def _is_version_int(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def validate_artifact_local(artifact: Artifact) -> list[Diagnostic]:
    """Field-level validation of a single artifact; never inspects others.

    Pure: the same artifact always yields the same diagnostics, sorted by
    rule id.
    """
    diags: list[Diagnostic] = []
    subject = (artifact.id,)

    if CONTENT_HASH_PATTERN.match(artifact.content_hash) is None:
        diags.append(
            error(
                "E_LOCAL_BAD_HASH",
                subject,
                f"content_hash of '{artifact.id}' is not a 64-char lowercase hex digest",
            )
        )

    payload = artifact.payload
    if artifact.kind == ArtifactKind.DATASET_SPLIT:
        role = payload.get("split_role")
        if role is None:
            diags.append(
                error(
                    "E_LOCAL_MISSING_PAYLOAD_KEY",
                    subject,
                    f"dataset_split '{artifact.id}' payload lacks 'split_role'",
                )
            )
        elif role not in {r.value for r in SplitRole}:
            diags.append(
                error(
                    "E_LOCAL_BAD_PAYLOAD_VALUE",
                    subject,
                    f"dataset_split '{artifact.id}' split_role {role!r} is not one of "
                    "train/validation/test",
                )
            )
    elif artifact.kind == ArtifactKind.METRIC_DEFINITION:
        direction = payload.get("direction")
        if direction is None:
            diags.append(
                error(
                    "E_LOCAL_MISSING_PAYLOAD_KEY",
                    subject,
                    f"metric_definition '{artifact.id}' payload lacks 'direction'",
                )
            )
        elif direction not in {d.value for d in MetricDirection}:
            diags.append(
                error(
                    "E_LOCAL_BAD_PAYLOAD_VALUE",
                    subject,
                    f"metric_definition '{artifact.id}' direction {direction!r} is not "
                    "higher_is_better or lower_is_better",
                )
            )
        if "metric_version" not in payload:
            diags.append(
                error(
                    "E_LOCAL_MISSING_PAYLOAD_KEY",
                    subject,
                    f"metric_definition '{artifact.id}' payload lacks 'metric_version'",
                )
            )
        elif not _is_version_int(payload["metric_version"]):
            diags.append(
                error(
                    "E_LOCAL_BAD_PAYLOAD_VALUE",
                    subject,
                    f"metric_definition '{artifact.id}' metric_version must be an integer >= 1",
                )
            )
    elif artifact.kind == ArtifactKind.METRIC_VALUE:
        if "value" not in payload:
            diags.append(
                error(
                    "E_LOCAL_MISSING_PAYLOAD_KEY",
                    subject,
                    f"metric_value '{artifact.id}' payload lacks 'value'",
                )
            )
        elif not _is_finite_number(payload["value"]):
            diags.append(
                error(
                    "E_LOCAL_NONFINITE_METRIC",
                    subject,
                    f"metric_value '{artifact.id}' value {payload['value']!r} is not a "
                    "finite real number",
                )
            )
        if "metric_version" not in payload:
            diags.append(
                error(
                    "E_LOCAL_MISSING_PAYLOAD_KEY",
                    subject,
                    f"metric_value '{artifact.id}' payload lacks 'metric_version'",
                )
            )
        elif not _is_version_int(payload["metric_version"]):
            diags.append(
                error(
                    "E_LOCAL_BAD_PAYLOAD_VALUE",
                    subject,
                    f"metric_value '{artifact.id}' metric_version must be an integer >= 1",
                )
            )
        split = payload.get("split")
        if split is not None and split not in (SplitRole.VALIDATION.value, SplitRole.TEST.value):
            diags.append(
                error(
                    "E_LOCAL_BAD_PAYLOAD_VALUE",
                    subject,
                    f"metric_value '{artifact.id}' split {split!r} is not validation or test",
                )
            )

    for trace in artifact.traces:
        if trace.kind == TraceKind.DERIVED_FROM:
            if trace.rationale is None or not trace.rationale.strip():
                diags.append(
                    error(
                        "E_LOCAL_MISSING_RATIONALE",
                        subject,
                        f"derived_from trace of '{artifact.id}' to '{trace.target}' "
                        "lacks a rationale",
                    )
                )

    return canonical_order(diags)
