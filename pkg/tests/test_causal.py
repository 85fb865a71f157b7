import numpy as np
import pytest

from helpers import all_dsep_triples, d_separated_bruteforce
from faithless.causal import (
    CausalGraph,
    CyclicGraphError,
    causality_vs_correlation_text,
    d_separated,
    faithfulness_violations,
    linear_gaussian_data,
    loop_ground_truth,
    pc_skeleton,
    random_dag,
    skeleton_f1,
    triangle_faithfulness_tables,
)
from faithless.stats import Undefined, build_report, trace_report


def edge_set(*pairs):
    return {frozenset(p) for p in pairs}


class TestCausalGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            CausalGraph(("A",), (("A", "A"),))

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ValueError):
            CausalGraph(("A", "B"), (("A", "B"), ("A", "B")))

    def test_rejects_unknown_node(self):
        with pytest.raises(ValueError):
            CausalGraph(("A",), (("A", "B"),))

    def test_acyclic_flag(self):
        dag = CausalGraph(("A", "B", "C"), (("A", "B"), ("B", "C")))
        loop = CausalGraph(("A", "B"), (("A", "B"), ("B", "A")))
        assert dag.acyclic and not loop.acyclic

    def test_json_round_trip(self):
        g = CausalGraph(("A", "B", "C"), (("A", "B"), ("C", "B")))
        assert CausalGraph.from_json(g.to_json()) == g

    def test_shortest_directed_path(self):
        g = CausalGraph(("D", "P", "O"), (("D", "P"), ("P", "O"), ("O", "P")))
        assert g.shortest_directed_path("D", "O") == 2
        assert g.shortest_directed_path("O", "D") == np.inf


class TestDSeparation:
    def test_chain(self):
        g = CausalGraph(("A", "B", "C"), (("A", "B"), ("B", "C")))
        assert d_separated(g, "A", "C", {"B"})
        assert not d_separated(g, "A", "C", set())

    def test_collider(self):
        g = CausalGraph(("A", "B", "C"), (("A", "C"), ("B", "C")))
        assert d_separated(g, "A", "B", set())
        assert not d_separated(g, "A", "B", {"C"})

    def test_collider_descendant_opens_path(self):
        g = CausalGraph(("A", "B", "C", "S"), (("A", "C"), ("B", "C"), ("C", "S")))
        assert not d_separated(g, "A", "B", {"S"})

    def test_disconnected(self):
        g = CausalGraph(("A", "B", "C"), ())
        assert d_separated(g, "A", "B", set())
        assert d_separated(g, "A", "B", {"C"})

    def test_cyclic_refused(self):
        g = CausalGraph(("A", "B"), (("A", "B"), ("B", "A")))
        with pytest.raises(CyclicGraphError):
            d_separated(g, "A", "B", set())

    def test_argument_validation(self):
        g = CausalGraph(("A", "B"), (("A", "B"),))
        with pytest.raises(ValueError):
            d_separated(g, "A", "A", set())
        with pytest.raises(ValueError):
            d_separated(g, "A", "B", {"A"})

    def test_against_bruteforce_on_random_dags(self):
        for seed in range(40):
            g = random_dag(5, 0.4, seed=seed)
            for x, y, z in all_dsep_triples(g, max_cond=2):
                assert d_separated(g, x, y, z) == d_separated_bruteforce(g, x, y, z), (
                    seed, x, y, z, g.edges,
                )

    def test_adding_edges_never_separates_more(self):
        for seed in range(10):
            g = random_dag(5, 0.3, seed=seed)
            extra = None
            for i in range(5):
                for j in range(i + 1, 5):
                    e = (f"X{i}", f"X{j}")
                    if e not in g.edges:
                        extra = e
                        break
                if extra:
                    break
            if extra is None:
                continue
            bigger = CausalGraph(g.nodes, g.edges + (extra,))
            for x, y, z in all_dsep_triples(g, max_cond=2):
                if d_separated(bigger, x, y, z):
                    assert d_separated(g, x, y, z)


class TestFaithfulnessViolations:
    def test_integral_loop_inversion(self, ex1_trace):
        graph, channels = loop_ground_truth(ex1_trace)
        report = trace_report(ex1_trace, labels=channels)
        faith = faithfulness_violations(graph, report)
        flagged_edges = {e for e, _, _ in faith.causation_without_correlation}
        assert ("D", "P") in flagged_edges
        assert ("P", "O") in flagged_edges and ("O", "P") in flagged_edges
        pairs = {p for p, _, _ in faith.correlation_without_adjacency}
        assert pairs == {frozenset(("D", "O"))}
        (_, r, length), = faith.correlation_without_adjacency
        assert r > 0.99 and length == 2

    def test_empty_graph_independent_channels(self):
        rng = np.random.Generator(np.random.Philox(key=0))
        data = {c: rng.standard_normal(4000) for c in "ABC"}
        report = build_report(data)
        g = CausalGraph(("A", "B", "C"), ())
        faith = faithfulness_violations(g, report)
        assert not faith.causation_without_correlation
        assert not faith.correlation_without_adjacency

    def test_node_missing_from_report(self):
        g = CausalGraph(("Z",), ())
        rng = np.random.Generator(np.random.Philox(key=0))
        report = build_report({"A": rng.standard_normal(100)})
        with pytest.raises(ValueError):
            faithfulness_violations(g, report)


class TestPcSkeleton:
    def test_learned_skeleton_inverts_truth(self, ex1_trace):
        graph, channels = loop_ground_truth(ex1_trace)
        report = trace_report(ex1_trace, max_cond=2, labels=channels)
        learned = pc_skeleton(report)
        assert learned == edge_set(("O", "D"))
        assert not (learned & graph.adjacent_pairs())

    def test_independent_channels_empty(self):
        rng = np.random.Generator(np.random.Philox(key=1))
        data = {c: rng.standard_normal(4000) for c in "ABC"}
        report = build_report(data, max_cond=1)
        assert pc_skeleton(report) == set()

    def test_bivariate_dependence(self):
        rng = np.random.Generator(np.random.Philox(key=2))
        x = rng.standard_normal(4000)
        data = {"X": x, "Y": x + 0.5 * rng.standard_normal(4000)}
        report = build_report(data, max_cond=1)
        assert pc_skeleton(report) == edge_set(("X", "Y"))

    def test_floor_extremes(self):
        rng = np.random.Generator(np.random.Philox(key=3))
        z = rng.standard_normal(4000)
        data = {
            "A": z + rng.standard_normal(4000),
            "B": z + rng.standard_normal(4000),
            "C": rng.standard_normal(4000) + 0.3 * z,
        }
        report = build_report(data, max_cond=1)
        complete = {frozenset(p) for p in (("A", "B"), ("A", "C"), ("B", "C"))}
        assert pc_skeleton(report, floor=1e-12) == complete
        assert pc_skeleton(report, floor=1.0 + 1e-9) == set()

    def test_missing_conditionals_reported(self):
        rng = np.random.Generator(np.random.Philox(key=5))
        z = rng.standard_normal(1000)
        data = {"A": z + rng.standard_normal(1000), "B": z + rng.standard_normal(1000), "C": z}
        report = build_report(data)  # pairwise only
        with pytest.raises(ValueError, match="max_cond"):
            pc_skeleton(report, max_cond=1)

    def test_chain_separated(self):
        rng = np.random.Generator(np.random.Philox(key=4))
        a = rng.standard_normal(20_000)
        b = a + 0.6 * rng.standard_normal(20_000)
        c = b + 0.6 * rng.standard_normal(20_000)
        report = build_report({"A": a, "B": b, "C": c}, max_cond=1)
        assert pc_skeleton(report) == edge_set(("A", "B"), ("B", "C"))


class TestPositiveControl:
    def test_linear_gaussian_dags_are_recovered(self):
        f1s = []
        clean = 0
        runs = 20
        for seed in range(runs):
            graph = random_dag(5, 0.35, seed=1000 + seed)
            data = linear_gaussian_data(graph, n=4000, seed=2000 + seed)
            report = build_report(data, max_cond=2)
            learned = pc_skeleton(report)
            f1s.append(skeleton_f1(learned, graph.adjacent_pairs()))
            faith = faithfulness_violations(graph, report)
            if not faith.causation_without_correlation:
                clean += 1
        assert np.mean(f1s) >= 0.95
        assert clean >= runs - 1


@pytest.fixture(scope="module")
def tables(ex2_trace):
    return triangle_faithfulness_tables(ex2_trace)


class TestTriangleTables:
    def test_identity_cells(self, tables):
        non = tables.noncollider
        assert non[("O", "P")]["D"] == pytest.approx(1.0, abs=1e-6)
        assert non[("O", "P")]["RD"] == pytest.approx(1.0, abs=1e-6)
        assert non[("O", "E")]["RD"] == pytest.approx(-1.0, abs=1e-6)
        assert non[("P", "E")]["R"] == pytest.approx(-1.0, abs=1e-6)
        assert non[("P", "E")]["RD"] == pytest.approx(-1.0, abs=1e-6)

    def test_undefined_cells(self, tables):
        col = tables.collider
        assert isinstance(col[("O", "P")]["R"], Undefined)  # E,R fix P
        assert isinstance(col[("O", "P")]["RD"], Undefined)
        assert isinstance(col[("O", "E")]["R"], Undefined)
        assert isinstance(col[("O", "E")]["D"], Undefined)
        assert isinstance(col[("O", "E")]["RD"], Undefined)
        assert isinstance(col[("P", "E")]["D"], Undefined)  # O,D fix P
        assert isinstance(col[("P", "E")]["RD"], Undefined)

    def test_collider_identity(self, tables):
        col = tables.collider
        assert col[("O", "P")]["D"] == pytest.approx(1.0, abs=1e-6)
        assert col[("P", "E")]["R"] == pytest.approx(-1.0, abs=1e-6)

    def test_regularized_signs(self, tables):
        col = tables.collider
        assert col[("O", "P")]["RD"].regularized > 0
        assert col[("O", "E")]["RD"].regularized < 0
        assert col[("P", "E")]["RD"].regularized < 0

    def test_rendering(self, tables):
        text = tables.render()
        assert "undef" in text and "non-collider" in text

    def test_requires_reference_channel(self, ex1_trace):
        # constant R is fine; a capacitor trace has no R at all
        from faithless.plant import ScenarioSpec, SmoothNoiseInput, simulate

        spec = ScenarioSpec(model="Capacitor", dt=0.001, n_steps=2000, seed=0,
                            inputs={"V": SmoothNoiseInput(0.1, 1.0)})
        with pytest.raises(ValueError):
            triangle_faithfulness_tables(simulate(spec))


class TestGroundTruth:
    def test_constant_reference_drops_error_channel(self, ex1_trace):
        graph, channels = loop_ground_truth(ex1_trace)
        assert set(channels) == {"D", "P", "O"}
        assert not graph.acyclic

    def test_varying_reference_includes_error(self, ex2_trace):
        graph, channels = loop_ground_truth(ex2_trace)
        assert set(channels) == {"D", "R", "E", "P", "O"}
        assert ("E", "O") in graph.edges


class TestDiagram:
    def test_side_by_side(self, ex1_trace):
        graph, channels = loop_ground_truth(ex1_trace)
        report = trace_report(ex1_trace, labels=channels)
        text = causality_vs_correlation_text(graph, report)
        assert "Causality" in text
        assert "O <-> P" in text
        assert "D --" in text and "-- O" in text


class TestSynthData:
    def test_linear_gaussian_shapes(self):
        g = random_dag(4, 0.5, seed=7)
        data = linear_gaussian_data(g, n=500, seed=8)
        assert set(data) == set(g.nodes)
        assert all(v.size == 500 for v in data.values())

    def test_children_depend_on_parents(self):
        g = CausalGraph(("X0", "X1"), (("X0", "X1"),))
        data = linear_gaussian_data(g, n=20_000, seed=9)
        from faithless.stats import correlation

        assert abs(correlation(data["X0"], data["X1"])) > 0.3

    def test_cyclic_rejected(self):
        g = CausalGraph(("A", "B"), (("A", "B"), ("B", "A")))
        with pytest.raises(CyclicGraphError):
            linear_gaussian_data(g, n=10, seed=0)
