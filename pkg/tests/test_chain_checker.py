from __future__ import annotations

import pytest

from tracectl.artifact_model import Artifact, ArtifactKind, TraceKind, TraceRef
from tracectl.chain_checker import (
    IncrementPolicy,
    build_chains,
    check_improvement,
    check_increment_policy,
    check_metric_consistency,
    check_roots_in_catalogue,
    recheck_chain,
)
from tracectl.graph_engine import build_graph
from tracectl.manifest_io import Project, ProjectConfig

HASH = "d" * 64


def make(artifact_id, kind, traces=(), payload=None):
    return Artifact(artifact_id, kind, artifact_id, HASH, payload or {}, tuple(traces))


def graph_of(artifacts, config=None):
    ordered = tuple(sorted(artifacts, key=lambda a: a.id))
    return build_graph(Project(config=config or ProjectConfig(), artifacts=ordered))


def version(artifact_id, predecessor, rationale="because", accepted=False):
    return make(
        artifact_id,
        ArtifactKind.MODEL_VERSION,
        [TraceRef(TraceKind.DERIVED_FROM, predecessor, rationale, accepted)],
    )


def reading(value_id, run_id, value, metric_version=1, split="validation"):
    return make(
        value_id,
        ArtifactKind.METRIC_VALUE,
        [TraceRef(TraceKind.MEASURED_ON, run_id), TraceRef(TraceKind.DEFINED_BY, "metric_1")],
        payload={"value": value, "metric_version": metric_version, "split": split},
    )


def metric_def(artifact_id="metric_1", direction="higher_is_better", metric_version=1):
    return make(
        artifact_id,
        ArtifactKind.METRIC_DEFINITION,
        payload={"direction": direction, "metric_version": metric_version},
    )


def small_chain(values=(0.6, 0.7, 0.8), accepted=False):
    artifacts = [
        make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
        metric_def(),
        version("run_1", "prim_1"),
        version("run_2", "run_1"),
        version("run_3", "run_2", accepted=accepted),
    ]
    for index, value in enumerate(values, start=1):
        artifacts.append(reading(f"mval_{index}", f"run_{index}", value))
    return graph_of(artifacts)


class TestBuildChains:
    def test_f1_forest(self, f1_graph):
        forest = build_chains(f1_graph)
        assert forest.diagnostics == ()
        (tree,) = forest.trees
        assert tree.anchor == "prim_lenet"
        assert tree.root == "run_1"
        assert tree.members == ("run_1", "run_2", "run_3")
        assert tree.depth == 3
        assert tree.head == "run_3"
        assert [r.value for r in forest.readings["run_2"]] == [0.78]
        assert forest.metric_directions == {1: "higher_is_better"}

    def test_f2_branching_tree(self, f2_graph):
        forest = build_chains(f2_graph)
        (tree,) = forest.trees
        assert tree.members == ("run_1", "run_2", "run_2b", "run_3")
        assert tree.depth == 3
        assert tree.head == "run_3"

    def test_partition_counts(self, f1_graph, f2_graph):
        for graph in (f1_graph, f2_graph):
            forest = build_chains(graph)
            versions = graph.ids_of_kind(ArtifactKind.MODEL_VERSION)
            members = [m for tree in forest.trees for m in tree.members]
            assert sorted(members) == versions
            assert len(set(members)) == len(members)

    def test_cycle_detected(self):
        graph = graph_of([version("run_a", "run_b"), version("run_b", "run_a")])
        forest = build_chains(graph)
        cycle = [d for d in forest.diagnostics if d.rule_id == "E_CHAIN_CYCLE"]
        assert len(cycle) == 1
        assert set(cycle[0].subjects) == {"run_a", "run_b"}
        assert forest.trees == ()

    def test_descendant_of_cycle_has_no_root(self):
        graph = graph_of(
            [version("run_a", "run_b"), version("run_b", "run_a"), version("run_c", "run_a")]
        )
        forest = build_chains(graph)
        no_root = [d for d in forest.diagnostics if d.rule_id == "E_CHAIN_NO_ROOT"]
        assert [d.subjects for d in no_root] == [("run_c",)]

    def test_two_trees_from_shared_catalogue_entry(self):
        graph = graph_of(
            [
                make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
                version("run_1", "prim_1"),
                version("run_2", "prim_1"),
            ]
        )
        forest = build_chains(graph)
        assert [t.root for t in forest.trees] == ["run_1", "run_2"]
        assert all(t.anchor == "prim_1" for t in forest.trees)


class TestRootsInCatalogue:
    def test_f1_roots_are_anchored(self, f1_graph):
        forest = build_chains(f1_graph)
        assert check_roots_in_catalogue(forest, f1_graph) == []

    def test_root_derived_from_wrong_kind_flagged(self):
        graph = graph_of(
            [make("hlr_1", ArtifactKind.HLR), version("run_1", "hlr_1"), version("run_2", "run_1")]
        )
        forest = build_chains(graph)
        diags = check_roots_in_catalogue(forest, graph)
        assert [(d.rule_id, d.subjects) for d in diags] == [("E_CHAIN_BAD_ROOT", ("run_1",))]

    def test_bare_root_left_to_schema(self):
        # a version with no predecessor at all is a schema finding, not a chain one
        graph = graph_of([make("run_1", ArtifactKind.MODEL_VERSION), version("run_2", "run_1")])
        forest = build_chains(graph)
        assert check_roots_in_catalogue(forest, graph) == []

    def test_policy_gate_skips_root_check(self):
        graph = graph_of(
            [make("hlr_1", ArtifactKind.HLR), version("run_1", "hlr_1")]
        )
        forest = build_chains(graph)
        diags = check_increment_policy(forest, graph, IncrementPolicy(mode="rationale_only"))
        assert [d for d in diags if d.rule_id == "E_CHAIN_BAD_ROOT"] == []
        diags = check_increment_policy(
            forest, graph, IncrementPolicy(mode="catalogue_and_rationale")
        )
        assert [d.rule_id for d in diags] == ["E_CHAIN_BAD_ROOT"]


class TestMetricConsistency:
    def test_f1_is_consistent(self, f1_graph):
        assert check_metric_consistency(f1_graph, ProjectConfig()) == []

    def test_two_active_definitions(self):
        graph = graph_of(
            [metric_def("metric_1"), metric_def("metric_2")]
        )
        diags = check_metric_consistency(graph, ProjectConfig(active_metric_version=1))
        assert [d.rule_id for d in diags] == ["E_MULTIPLE_ACTIVE_METRICS"]
        assert diags[0].subjects == ("metric_1", "metric_2")

    def test_untraced_value(self):
        artifacts = [
            metric_def(),
            make(
                "mval_1",
                ArtifactKind.METRIC_VALUE,
                [TraceRef(TraceKind.DEFINED_BY, "metric_1")],
                payload={"value": 0.5, "metric_version": 1},
            ),
        ]
        diags = check_metric_consistency(graph_of(artifacts), ProjectConfig())
        assert [d.rule_id for d in diags] == ["E_VALUE_UNTRACED"]

    def test_version_without_active_reading_warns(self):
        graph = graph_of(
            [
                make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
                metric_def(),
                metric_def("metric_2", metric_version=2),
                version("run_1", "prim_1"),
                reading("mval_1", "run_1", 0.5, metric_version=1),
            ]
        )
        diags = check_metric_consistency(graph, ProjectConfig(active_metric_version=2))
        assert [(d.rule_id, d.subjects) for d in diags] == [
            ("W_VERSION_UNMEASURED", ("run_1",))
        ]


class TestImprovement:
    def test_strictly_increasing_chain_is_clean(self):
        forest = build_chains(small_chain())
        assert check_improvement(forest, ProjectConfig()) == []

    def test_regression_flagged_on_edge(self):
        forest = build_chains(small_chain(values=(0.6, 0.85, 0.80)))
        diags = check_improvement(forest, ProjectConfig())
        assert [(d.rule_id, d.subjects) for d in diags] == [
            ("E_NON_IMPROVING_INCREMENT", ("run_3", "run_2"))
        ]

    def test_equality_is_not_an_improvement(self):
        forest = build_chains(small_chain(values=(0.6, 0.8, 0.8)))
        diags = check_improvement(forest, ProjectConfig())
        assert [d.rule_id for d in diags] == ["E_NON_IMPROVING_INCREMENT"]

    def test_epsilon_requires_margin(self):
        forest = build_chains(small_chain(values=(0.6, 0.80, 0.805)))
        assert check_improvement(forest, ProjectConfig()) == []
        diags = check_improvement(forest, ProjectConfig(improvement_epsilon=0.01))
        assert [d.rule_id for d in diags] == ["E_NON_IMPROVING_INCREMENT"]

    def test_accepted_regression_downgrades(self):
        forest = build_chains(small_chain(values=(0.6, 0.85, 0.80), accepted=True))
        diags = check_improvement(forest, ProjectConfig())
        assert [(d.rule_id, d.subjects) for d in diags] == [
            ("W_ACCEPTED_REGRESSION", ("run_3", "run_2"))
        ]

    def test_lower_is_better_direction(self):
        artifacts = [
            make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
            metric_def(direction="lower_is_better"),
            version("run_1", "prim_1"),
            version("run_2", "run_1"),
            reading("mval_1", "run_1", 0.30),
            reading("mval_2", "run_2", 0.20),
        ]
        forest = build_chains(graph_of(artifacts))
        assert check_improvement(forest, ProjectConfig()) == []
        # and the reverse regresses
        artifacts[-1] = reading("mval_2", "run_2", 0.40)
        forest = build_chains(graph_of(artifacts))
        assert [d.rule_id for d in check_improvement(forest, ProjectConfig())] == [
            "E_NON_IMPROVING_INCREMENT"
        ]

    def test_test_split_reading_used_as_fallback_is_flagged(self):
        artifacts = [
            make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
            metric_def(),
            version("run_1", "prim_1"),
            version("run_2", "run_1"),
            reading("mval_1", "run_1", 0.5, split="test"),
            reading("mval_2", "run_2", 0.7),
        ]
        forest = build_chains(graph_of(artifacts))
        diags = check_improvement(forest, ProjectConfig())
        assert [(d.rule_id, d.subjects) for d in diags] == [
            ("W_TEST_VALUE_IN_CHAIN", ("run_1",))
        ]

    def test_missing_values_skip_comparison(self):
        forest = build_chains(small_chain(values=(0.6,)))
        assert check_improvement(forest, ProjectConfig()) == []

    def test_monotone_sequence_when_clean(self, f1_graph):
        forest = build_chains(f1_graph)
        assert check_improvement(forest, ProjectConfig()) == []
        values = [forest.readings[v][0].value for v in ("run_1", "run_2", "run_3")]
        assert values == sorted(values) and len(set(values)) == len(values)


class TestRecheckChain:
    def test_equals_improvement_when_fully_measured(self, f1_graph, f2_graph):
        config = ProjectConfig()
        for graph in (f1_graph, f2_graph):
            forest = build_chains(graph)
            assert recheck_chain(forest, graph, config) == check_improvement(forest, config)

    def test_equals_improvement_on_regressing_chain(self):
        graph = small_chain(values=(0.6, 0.85, 0.80))
        forest = build_chains(graph)
        config = ProjectConfig()
        assert recheck_chain(forest, graph, config) == check_improvement(forest, config)

    def test_version_measured_only_under_old_metric_breaks_chain(self):
        artifacts = [
            make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
            metric_def(),
            metric_def("metric_2", metric_version=2),
            version("run_1", "prim_1"),
            version("run_2", "run_1"),
            version("run_3", "run_2"),
            reading("mval_1_v1", "run_1", 0.60),
            reading("mval_2_v1", "run_2", 0.70),
            reading("mval_3_v1", "run_3", 0.80),
            reading("mval_1_v2", "run_1", 0.62, metric_version=2),
            reading("mval_3_v2", "run_3", 0.88, metric_version=2),
        ]
        graph = graph_of(artifacts)
        forest = build_chains(graph)
        config = ProjectConfig(active_metric_version=2)
        diags = recheck_chain(forest, graph, config)
        assert [(d.rule_id, d.subjects) for d in diags] == [
            ("E_CHAIN_BROKEN_UNDER_METRIC", ("run_2",))
        ]

    def test_never_measured_version_is_not_broken(self):
        forest_graph = small_chain(values=(0.6, 0.7))  # run_3 has no reading at all
        forest = build_chains(forest_graph)
        assert recheck_chain(forest, forest_graph, ProjectConfig()) == []


class TestIncrementPolicy:
    def test_mode_none_is_silent(self, f1_graph):
        forest = build_chains(f1_graph)
        assert check_increment_policy(forest, f1_graph, IncrementPolicy(mode="none")) == []

    def test_good_rationale_passes(self, f1_graph):
        forest = build_chains(f1_graph)
        policy = IncrementPolicy(mode="catalogue_and_rationale")
        assert check_increment_policy(forest, f1_graph, policy) == []

    def test_missing_rationale_flagged(self):
        graph = graph_of(
            [
                make("prim_1", ArtifactKind.PRIMITIVE_CATALOGUE_ENTRY),
                version("run_1", "prim_1", rationale=None),
            ]
        )
        forest = build_chains(graph)
        diags = check_increment_policy(forest, graph, IncrementPolicy(mode="rationale_only"))
        assert [(d.rule_id, d.subjects) for d in diags] == [("E_MISSING_RATIONALE", ("run_1",))]

    def test_max_edit_ops_reserved(self, f1_graph):
        forest = build_chains(f1_graph)
        policy = IncrementPolicy(mode="rationale_only", max_edit_ops=1)
        diags = check_increment_policy(forest, f1_graph, policy)
        assert [d.rule_id for d in diags] == ["W_POLICY_UNSUPPORTED"]

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            IncrementPolicy(mode="strict")
        with pytest.raises(ValueError):
            IncrementPolicy(mode="none", max_edit_ops=0)

    def test_from_config(self):
        policy = IncrementPolicy.from_config(ProjectConfig(increment_policy="none"))
        assert policy.mode == "none" and policy.max_edit_ops is None


class TestStability:
    def test_diagnostics_stable_under_artifact_reordering(self, f1_project):
        reordered = Project(
            config=f1_project.config, artifacts=tuple(reversed(f1_project.artifacts))
        )
        g1 = build_graph(f1_project)
        g2 = build_graph(reordered)
        f1_forest, f2_forest = build_chains(g1), build_chains(g2)
        config = f1_project.config
        assert check_improvement(f1_forest, config) == check_improvement(f2_forest, config)
        assert check_metric_consistency(g1, config) == check_metric_consistency(g2, config)
        assert f1_forest.trees == f2_forest.trees
