"""Diagnostic records shared by all rule checkers."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """One rule finding: a stable rule id, a severity, and the artifacts it names.

    Rule ids beginning with ``E_`` are errors, ``W_`` warnings. ``subjects``
    is never empty; the first subject is the artifact the finding is about.
    """

    rule_id: str
    severity: Severity
    subjects: tuple[str, ...]
    message: str

    def __post_init__(self) -> None:
        if not self.subjects:
            raise ValueError(f"{self.rule_id}: diagnostic requires at least one subject")

    @property
    def sort_key(self) -> tuple[str, str, str]:
        return (self.rule_id, self.subjects[0], self.message)

    def to_dict(self) -> dict[str, object]:
        return {
            "rule_id": self.rule_id,
            "severity": self.severity.value,
            "subjects": list(self.subjects),
            "message": self.message,
        }


def error(rule_id: str, subjects: tuple[str, ...] | list[str], message: str) -> Diagnostic:
    return Diagnostic(rule_id, Severity.ERROR, tuple(subjects), message)


def warning(rule_id: str, subjects: tuple[str, ...] | list[str], message: str) -> Diagnostic:
    return Diagnostic(rule_id, Severity.WARNING, tuple(subjects), message)


def canonical_order(diagnostics: list[Diagnostic]) -> list[Diagnostic]:
    """Sort by (rule id, first subject, message) and drop exact duplicates."""
    ordered = sorted(set(diagnostics), key=lambda d: d.sort_key)
    return ordered


class UnknownIdError(Exception):
    """Raised by queries that reference an artifact id absent from the graph."""

    rule_id = "E_UNKNOWN_ID"

    def __init__(self, artifact_id: str):
        super().__init__(f"unknown artifact id: {artifact_id!r}")
        self.artifact_id = artifact_id
