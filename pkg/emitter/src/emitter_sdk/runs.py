"""Run registration, metric logging, and atomic manifest write-out.

Nothing touches the project directory until ``finalize_run``; manifests are
then written via temp files and renamed, so a crashed training job cannot
leave a half-written record behind.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import warnings
from pathlib import Path

_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.\-]+$")
_HASH_PATTERN = re.compile(r"^[0-9a-f]{64}$")
_RUN_ID_PATTERN = re.compile(r"^run_(\d+)$")

# run ids handed out this process but not yet written to disk, per project
_reserved_ids: dict[str, set[str]] = {}


class RunClosedError(RuntimeError):
    """The handle was already finalized; no further logging is possible."""


def config_digest(config_payload: dict) -> str:
    """Content digest of a learning configuration payload."""
    try:
        canonical = json.dumps(
            config_payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"configuration payload is not JSON-serializable: {exc}") from exc
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _scan_artifacts(project_root: Path) -> dict[str, dict] | None:
    """Best-effort id -> manifest map; None when the project is unreadable."""
    artifact_dir = project_root / "artifacts"
    if not artifact_dir.is_dir():
        return None
    known: dict[str, dict] = {}
    for path in sorted(artifact_dir.glob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            continue
        if isinstance(doc, dict) and isinstance(doc.get("id"), str):
            known[doc["id"]] = doc
    return known


def _allocate_run_id(project_root: Path, known_ids: set[str]) -> str:
    key = str(project_root.resolve())
    reserved = _reserved_ids.setdefault(key, set())
    taken = known_ids | reserved
    highest = 0
    for artifact_id in taken:
        match = _RUN_ID_PATTERN.match(artifact_id)
        if match:
            highest = max(highest, int(match.group(1)))
    run_id = f"run_{highest + 1}"
    while run_id in taken:  # non run_N ids could still collide
        highest += 1
        run_id = f"run_{highest + 1}"
    reserved.add(run_id)
    return run_id


def _manifest(artifact_id, kind, name, content_hash, payload, traces) -> dict:
    return {
        "id": artifact_id,
        "kind": kind,
        "name": name,
        "content_hash": content_hash,
        "payload": payload,
        "traces": traces,
    }


def _trace(kind: str, target: str, rationale: str | None = None) -> dict:
    entry = {"kind": kind, "target": target}
    if rationale is not None:
        entry["rationale"] = rationale
    return entry


class RunHandle:
    """Staging area for one training run; closed after finalize."""

    def __init__(
        self,
        project_root: Path,
        run_id: str,
        predecessor_id: str,
        architecture_id: str,
        train_split_id: str,
        config_id: str,
        config_manifest: dict | None,
        rationale: str,
        known: dict[str, dict] | None,
    ):
        self.project_root = project_root
        self.run_id = run_id
        self.predecessor_id = predecessor_id
        self.architecture_id = architecture_id
        self.train_split_id = train_split_id
        self.config_id = config_id
        self.rationale = rationale
        self._config_manifest = config_manifest
        self._known = known
        self._staged_values: list[dict] = []
        self._closed = False

    @property
    def closed(self) -> bool:
        return self._closed

    def _ensure_open(self) -> None:
        if self._closed:
            raise RunClosedError(f"run {self.run_id} is already finalized")

    def log_metric_value(self, value: float, metric_version: int, split: str) -> dict:
        return log_metric_value(self, value, metric_version, split)

    def finalize(self, weights_digest: str) -> list[Path]:
        return finalize_run(self, weights_digest)


def _require_kind(known: dict[str, dict], artifact_id: str, kinds: tuple[str, ...], role: str) -> None:
    if artifact_id not in known:
        raise ValueError(f"{role} '{artifact_id}' does not exist in the project")
    kind = known[artifact_id].get("kind")
    if kind not in kinds:
        raise ValueError(
            f"{role} '{artifact_id}' has kind {kind!r}, expected one of {kinds}"
        )


def _discover_train_split(known: dict[str, dict]) -> str:
    candidates = sorted(
        artifact_id
        for artifact_id, doc in known.items()
        if doc.get("kind") == "dataset_split"
        and isinstance(doc.get("payload"), dict)
        and doc["payload"].get("split_role") == "train"
    )
    if len(candidates) != 1:
        raise ValueError(
            "cannot discover the training split "
            f"({len(candidates)} candidates); pass train_split_id explicitly"
        )
    return candidates[0]


def _find_existing_config(known: dict[str, dict] | None, digest: str) -> str | None:
    if known is None:
        return None
    matches = sorted(
        artifact_id
        for artifact_id, doc in known.items()
        if doc.get("kind") == "learning_configuration" and doc.get("content_hash") == digest
    )
    return matches[0] if matches else None


def start_run(
    project_root: str | Path,
    predecessor_id: str,
    architecture_id: str,
    config_payload: dict,
    rationale: str,
    *,
    train_split_id: str | None = None,
) -> RunHandle:
    """Register a new training run derived from ``predecessor_id``.

    Stages the model version manifest (and a learning configuration capture
    when no identical one exists); nothing is written until finalize.
    """
    root = Path(project_root)
    if not root.is_dir():
        raise ValueError(f"project root {root} is not a directory")
    if not rationale or not rationale.strip():
        raise ValueError("a non-empty rationale for the increment is required")
    for artifact_id, label in ((predecessor_id, "predecessor"), (architecture_id, "architecture")):
        if not _ID_PATTERN.match(artifact_id or ""):
            raise ValueError(f"{label} id {artifact_id!r} is not a valid artifact id")

    known = _scan_artifacts(root)
    if known is not None:
        _require_kind(
            known,
            predecessor_id,
            ("model_version", "primitive_catalogue_entry"),
            "predecessor",
        )
        _require_kind(known, architecture_id, ("dnn_architecture",), "architecture")
        if train_split_id is None:
            train_split_id = _discover_train_split(known)
        else:
            _require_kind(known, train_split_id, ("dataset_split",), "train split")
    elif train_split_id is None:
        raise ValueError("project is unreadable; pass train_split_id explicitly")

    digest = config_digest(config_payload)
    existing_config = _find_existing_config(known, digest)
    if existing_config is not None:
        config_id = existing_config
        config_manifest = None
    else:
        config_id = f"lconf_{digest[:12]}"
        config_manifest = _manifest(
            config_id,
            "learning_configuration",
            f"captured learning configuration {digest[:12]}",
            digest,
            config_payload,
            [],
        )

    run_id = _allocate_run_id(root, set(known) if known else set())
    return RunHandle(
        project_root=root,
        run_id=run_id,
        predecessor_id=predecessor_id,
        architecture_id=architecture_id,
        train_split_id=train_split_id,
        config_id=config_id,
        config_manifest=config_manifest,
        rationale=rationale.strip(),
        known=known,
    )


def log_metric_value(handle: RunHandle, value: float, metric_version: int, split: str) -> dict:
    """Stage one metric value for the run, traced to it and its definition."""
    handle._ensure_open()
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"metric value must be a finite real number, got {value!r}")
    if isinstance(metric_version, bool) or not isinstance(metric_version, int) or metric_version < 1:
        raise ValueError("metric_version must be an integer >= 1")
    if split not in ("validation", "test"):
        raise ValueError("split must be 'validation' or 'test'")

    definition_id = _find_metric_definition(handle, metric_version)
    payload = {"value": float(value), "metric_version": metric_version, "split": split}
    value_id = f"{handle.run_id}_m{len(handle._staged_values) + 1}"
    staged = _manifest(
        value_id,
        "metric_value",
        f"{split} metric for {handle.run_id}",
        config_digest(payload),
        payload,
        [
            _trace("measured_on", handle.run_id),
            _trace("defined_by", definition_id),
        ],
    )
    handle._staged_values.append(staged)
    return staged


def _find_metric_definition(handle: RunHandle, metric_version: int) -> str:
    known = handle._known if handle._known is not None else _scan_artifacts(handle.project_root)
    if known is None:
        raise ValueError("project is unreadable; cannot locate the metric definition")
    candidates = sorted(
        artifact_id
        for artifact_id, doc in known.items()
        if doc.get("kind") == "metric_definition"
        and isinstance(doc.get("payload"), dict)
        and doc["payload"].get("metric_version") == metric_version
    )
    if not candidates:
        raise ValueError(f"no metric_definition with metric_version {metric_version}")
    return candidates[0]


def finalize_run(handle: RunHandle, weights_digest: str) -> list[Path]:
    """Write all staged manifests atomically and close the handle."""
    handle._ensure_open()
    if not isinstance(weights_digest, str) or not _HASH_PATTERN.match(weights_digest):
        raise ValueError("weights_digest must be a 64-char lowercase hex digest")
    if not handle._staged_values:
        warnings.warn(
            f"finalizing run {handle.run_id} with no metric values", RuntimeWarning, stacklevel=2
        )

    model_manifest = _manifest(
        handle.run_id,
        "model_version",
        f"trained weights {handle.run_id}",
        weights_digest,
        {},
        [
            _trace("derived_from", handle.predecessor_id, handle.rationale),
            _trace("trained_on", handle.train_split_id),
            _trace("configured_by", handle.config_id),
            _trace("instantiates", handle.architecture_id),
        ],
    )
    manifests = [model_manifest, *handle._staged_values]
    if handle._config_manifest is not None:
        manifests.insert(0, handle._config_manifest)

    artifact_dir = handle.project_root / "artifacts"
    artifact_dir.mkdir(parents=True, exist_ok=True)

    staged_paths: list[tuple[Path, Path]] = []
    try:
        for doc in manifests:
            final_path = artifact_dir / f"{doc['id']}.json"
            temp_path = artifact_dir / f"{doc['id']}.json.tmp"
            temp_path.write_text(
                json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            staged_paths.append((temp_path, final_path))
    except OSError:
        for temp_path, _ in staged_paths:
            temp_path.unlink(missing_ok=True)
        raise

    written: list[Path] = []
    for temp_path, final_path in staged_paths:
        temp_path.replace(final_path)
        written.append(final_path)

    handle._closed = True
    return sorted(written)
