from __future__ import annotations

from pathlib import Path

import pytest

from tracectl.graph_engine import TraceGraph, build_graph
from tracectl.manifest_io import Project, load_project

FIXTURES = Path(__file__).parent / "fixtures"
F1_ROOT = FIXTURES / "f1"
F2_ROOT = FIXTURES / "f2"


@pytest.fixture(scope="session")
def f1_root() -> Path:
    return F1_ROOT


@pytest.fixture(scope="session")
def f2_root() -> Path:
    return F2_ROOT


@pytest.fixture(scope="session")
def f1_project() -> Project:
    return load_project(F1_ROOT)


@pytest.fixture(scope="session")
def f1_graph(f1_project: Project) -> TraceGraph:
    return build_graph(f1_project)


@pytest.fixture(scope="session")
def f2_project() -> Project:
    return load_project(F2_ROOT)


@pytest.fixture(scope="session")
def f2_graph(f2_project: Project) -> TraceGraph:
    return build_graph(f2_project)
