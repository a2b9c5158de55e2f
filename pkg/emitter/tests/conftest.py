from __future__ import annotations

import shutil
from pathlib import Path

import pytest

F1_ROOT = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "f1"


@pytest.fixture()
def project_copy(tmp_path) -> Path:
    """A scratch copy of the known-clean reference project."""
    destination = tmp_path / "project"
    shutil.copytree(F1_ROOT, destination)
    return destination
