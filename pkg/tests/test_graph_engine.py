from __future__ import annotations

import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracectl.artifact_model import Artifact, ArtifactKind, TraceKind, TraceRef
from tracectl.diagnostics import UnknownIdError
from tracectl.graph_engine import (
    backward_traces,
    build_graph,
    check_schema_conformance,
    export_dot,
    forward_traces,
    orphans,
)
from tracectl.manifest_io import Project, ProjectConfig

HASH = "b" * 64


def project_from(artifacts: list[Artifact]) -> Project:
    ordered = tuple(sorted(artifacts, key=lambda a: a.id))
    return Project(config=ProjectConfig(), artifacts=ordered)


def make(artifact_id, kind, traces=(), payload=None):
    return Artifact(
        id=artifact_id,
        kind=kind,
        name=artifact_id,
        content_hash=HASH,
        payload=payload or {},
        traces=tuple(traces),
    )


def independent_f1_counts(f1_root):
    """Recount F1 from the raw files, bypassing the loader and the graph."""
    node_count = 0
    edge_count = 0
    for path in (f1_root / "artifacts").glob("*.json"):
        doc = json.loads(path.read_text())
        node_count += 1
        edge_count += len(doc["traces"])
    for line in (f1_root / "dataset-index.csv").read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        _, _, parts_field = line.split(",")
        node_count += 1
        edge_count += 1  # split membership
        edge_count += len([p for p in parts_field.split(";") if p])
    return node_count, edge_count


class TestBuildGraph:
    def test_f1_counts_match_independent_recount(self, f1_root, f1_graph):
        nodes, edges = independent_f1_counts(f1_root)
        assert (nodes, edges) == (37, 56)
        assert len(f1_graph.nodes) == nodes
        assert len(f1_graph.edges) == edges
        assert f1_graph.diagnostics == ()

    def test_dangling_target_degrades_to_diagnostic(self):
        artifact = make("a", ArtifactKind.DOMAIN_PART, [TraceRef(TraceKind.REFINES, "b")])
        graph = build_graph(project_from([artifact]))
        assert len(graph.nodes) == 1
        assert graph.edges == ()
        assert [d.rule_id for d in graph.diagnostics] == ["E_DANGLING_TARGET"]
        assert graph.diagnostics[0].subjects == ("a",)

    def test_empty_project_builds_empty_graph(self):
        graph = build_graph(project_from([]))
        assert graph.nodes == {}
        assert graph.edges == ()

    def test_duplicate_edges_collapse_keeping_first_rationale(self):
        artifact = make(
            "part_a",
            ArtifactKind.DOMAIN_PART,
            [
                TraceRef(TraceKind.REFINES, "hlr_a", "first"),
                TraceRef(TraceKind.REFINES, "hlr_a", "second"),
            ],
        )
        graph = build_graph(project_from([artifact, make("hlr_a", ArtifactKind.HLR)]))
        assert len(graph.edges) == 1
        assert graph.edges[0].rationale == "first"
        assert [d.rule_id for d in graph.diagnostics] == ["W_DUP_EDGE"]


class TestQueries:
    def test_forward_derived_from(self, f1_graph):
        assert forward_traces(f1_graph, "run_2", TraceKind.DERIVED_FROM) == ["run_1"]

    def test_backward_refines(self, f1_graph):
        assert backward_traces(f1_graph, "hlr_urban", TraceKind.REFINES) == [
            "part_oneway",
            "part_roundabout",
        ]

    def test_backward_fork(self, f2_graph):
        assert backward_traces(f2_graph, "run_1", TraceKind.DERIVED_FROM) == [
            "run_2",
            "run_2b",
        ]

    def test_no_edges_gives_empty_list(self, f1_graph):
        assert forward_traces(f1_graph, "hlr_urban") == []

    def test_unknown_id_raises(self, f1_graph):
        with pytest.raises(UnknownIdError):
            forward_traces(f1_graph, "nope")
        with pytest.raises(UnknownIdError):
            backward_traces(f1_graph, "nope")

    def test_unfiltered_forward_is_sorted_union(self, f1_graph):
        targets = forward_traces(f1_graph, "run_1")
        assert targets == sorted(targets)
        assert set(targets) == {"prim_lenet", "train_split", "lconf_base", "arch_base"}


# random little graphs for the symmetry property
_ids = st.lists(
    st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True), min_size=1, max_size=8, unique=True
)


@st.composite
def _graphs(draw):
    ids = draw(_ids)
    kinds = [draw(st.sampled_from(list(ArtifactKind))) for _ in ids]
    artifacts = []
    for artifact_id, kind in zip(ids, kinds):
        n_traces = draw(st.integers(min_value=0, max_value=3))
        traces = [
            TraceRef(draw(st.sampled_from(list(TraceKind))), draw(st.sampled_from(ids)))
            for _ in range(n_traces)
        ]
        artifacts.append(make(artifact_id, kind, traces))
    return build_graph(project_from(artifacts))


class TestSymmetry:
    @settings(max_examples=80, deadline=None)
    @given(graph=_graphs())
    def test_forward_backward_symmetry(self, graph):
        for kind in TraceKind:
            for a in graph.nodes:
                for b in forward_traces(graph, a, kind):
                    assert a in backward_traces(graph, b, kind)
            for b in graph.nodes:
                for a in backward_traces(graph, b, kind):
                    assert b in forward_traces(graph, a, kind)


class TestSchemaConformance:
    def test_f1_is_conforming(self, f1_graph):
        assert check_schema_conformance(f1_graph) == []

    def test_missing_trained_on(self):
        artifacts = [
            make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
            make("lconf_1", ArtifactKind.LEARNING_CONFIGURATION),
            make("arch_1", ArtifactKind.DNN_ARCHITECTURE),
            make(
                "run_1",
                ArtifactKind.MODEL_VERSION,
                [
                    TraceRef(TraceKind.DERIVED_FROM, "prim_1", "baseline"),
                    TraceRef(TraceKind.CONFIGURED_BY, "lconf_1"),
                    TraceRef(TraceKind.INSTANTIATES, "arch_1"),
                ],
            ),
        ]
        diags = check_schema_conformance(build_graph(project_from(artifacts)))
        assert [d.rule_id for d in diags] == ["E_SCHEMA_MISSING_TRACE"]
        assert diags[0].subjects == ("run_1",)
        assert "trained_on" in diags[0].message

    def test_bad_signature(self):
        artifacts = [
            make("hlr_1", ArtifactKind.HLR, [TraceRef(TraceKind.COVERS, "part_1")]),
            make("part_1", ArtifactKind.DOMAIN_PART, [TraceRef(TraceKind.REFINES, "hlr_1")]),
        ]
        diags = check_schema_conformance(build_graph(project_from(artifacts)))
        bad = [d for d in diags if d.rule_id == "E_SCHEMA_BAD_SIGNATURE"]
        assert len(bad) == 1
        assert bad[0].subjects == ("hlr_1", "part_1")

    def test_two_predecessors_violate_exactly_one(self):
        artifacts = [
            make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
            make("run_0", ArtifactKind.MODEL_VERSION, [TraceRef(TraceKind.DERIVED_FROM, "prim_1", "b")]),
            make(
                "run_1",
                ArtifactKind.MODEL_VERSION,
                [
                    TraceRef(TraceKind.DERIVED_FROM, "prim_1", "baseline"),
                    TraceRef(TraceKind.DERIVED_FROM, "run_0", "also this"),
                ],
            ),
        ]
        diags = check_schema_conformance(build_graph(project_from(artifacts)))
        missing = [d for d in diags if d.rule_id == "E_SCHEMA_MISSING_TRACE"]
        assert any(d.subjects == ("run_1",) and "derived_from" in d.message for d in missing)

    def test_trained_on_wrong_split_role_is_bad_signature(self):
        artifacts = [
            make("val_split", ArtifactKind.DATASET_SPLIT, payload={"split_role": "validation"}),
            make("run_1", ArtifactKind.MODEL_VERSION, [TraceRef(TraceKind.TRAINED_ON, "val_split")]),
        ]
        diags = check_schema_conformance(build_graph(project_from(artifacts)))
        assert any(d.rule_id == "E_SCHEMA_BAD_SIGNATURE" for d in diags)

    def test_metric_value_may_trace_run_and_inference_architecture(self):
        artifacts = [
            make("run_1", ArtifactKind.MODEL_VERSION),
            make("infer_1", ArtifactKind.INFERENCE_ARCHITECTURE),
            make("metric_1", ArtifactKind.METRIC_DEFINITION, payload={"direction": "higher_is_better", "metric_version": 1}),
            make(
                "mval_1",
                ArtifactKind.METRIC_VALUE,
                [
                    TraceRef(TraceKind.MEASURED_ON, "run_1"),
                    TraceRef(TraceKind.MEASURED_ON, "infer_1"),
                    TraceRef(TraceKind.DEFINED_BY, "metric_1"),
                ],
                payload={"value": 0.5, "metric_version": 1},
            ),
        ]
        diags = check_schema_conformance(build_graph(project_from(artifacts)))
        assert not [d for d in diags if d.subjects[0] == "mval_1"]

    def test_every_single_edge_deletion_is_caught(self, f1_project):
        """Removing any one trace from conforming F1 must trip the schema."""
        for artifact in f1_project.artifacts:
            for index, trace in enumerate(artifact.traces):
                kept = artifact.traces[:index] + artifact.traces[index + 1 :]
                mutated = [
                    dataclasses.replace(a, traces=kept) if a.id == artifact.id else a
                    for a in f1_project.artifacts
                ]
                diags = check_schema_conformance(
                    build_graph(Project(config=f1_project.config, artifacts=tuple(mutated)))
                )
                missing = [d for d in diags if d.rule_id == "E_SCHEMA_MISSING_TRACE"]
                assert missing, f"deleting {trace} from {artifact.id} went unnoticed"
                assert any(artifact.id in d.subjects for d in missing)


class TestOrphans:
    def test_isolated_node_is_orphan(self):
        graph = build_graph(project_from([make("hlr_1", ArtifactKind.HLR)]))
        diags = orphans(graph)
        assert [d.rule_id for d in diags] == ["W_ORPHAN"]

    def test_f1_has_no_orphans(self, f1_graph):
        assert orphans(f1_graph) == []

    def test_only_outgoing_is_not_orphan(self):
        artifacts = [
            make("part_1", ArtifactKind.DOMAIN_PART, [TraceRef(TraceKind.REFINES, "hlr_1")]),
            make("hlr_1", ArtifactKind.HLR),
        ]
        graph = build_graph(project_from(artifacts))
        assert orphans(graph) == []


class TestDotExport:
    def test_empty_graph(self):
        assert export_dot(build_graph(project_from([]))) == "digraph trace {\n}\n"

    def test_single_edge_statement(self):
        artifacts = [
            make("a", ArtifactKind.DOMAIN_PART, [TraceRef(TraceKind.REFINES, "b")]),
            make("b", ArtifactKind.HLR),
        ]
        dot = export_dot(build_graph(project_from(artifacts)))
        assert dot.count("->") == 1
        assert '"a" -> "b" [label="refines"];' in dot
        assert '"a" [label="a\\n[domain_part]"];' in dot

    def test_deterministic(self, f1_graph):
        assert export_dot(f1_graph) == export_dot(f1_graph)

    def test_f1_statement_counts(self, f1_graph):
        dot = export_dot(f1_graph)
        assert dot.count("->") == len(f1_graph.edges)
        assert dot.count("label=") == len(f1_graph.edges) + len(f1_graph.nodes)
