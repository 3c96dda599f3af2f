import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairpath.exceptions import CycleError, GraphError
from fairpath.graph import (CausalGraph, PseSpec, Strategy, all_paths_spec, check_identification,
                            enumerate_causal_paths, mediators, relabel, treatment_assignment,
                            validate_graph)


def g(edges, vertices=None, bidirected=()):
    vertices = vertices or sorted({v for e in edges for v in e})
    return CausalGraph(vertices, edges, bidirected)


TWO_MEDIATOR = g([("C", "A"), ("C", "M"), ("C", "W"), ("C", "Y"), ("A", "M"), ("A", "W"), ("A", "Y"),
           ("M", "W"), ("M", "Y"), ("W", "Y")])


class TestValidate:
    def test_dag_ok(self):
        validate_graph(g([("A", "M"), ("M", "Y"), ("A", "Y")]))

    def test_two_cycle(self):
        with pytest.raises(CycleError) as err:
            validate_graph(g([("A", "Y"), ("Y", "A")]))
        assert set(err.value.cycle) == {"A", "Y"}

    def test_dangling(self):
        with pytest.raises(GraphError, match="Z"):
            validate_graph(CausalGraph(["A"], [("A", "Z")]))

    def test_duplicate_edge(self):
        with pytest.raises(GraphError, match="duplicate"):
            validate_graph(g([("A", "Y"), ("A", "Y")]))

    def test_self_loop(self):
        with pytest.raises(GraphError):
            validate_graph(g([("A", "A")]))

    def test_duplicate_vertex(self):
        with pytest.raises(GraphError):
            validate_graph(CausalGraph(["A", "A"], []))

    def test_dict_round_trip(self):
        obj = {"vertices": ["A", "M", "Y", "C"],
               "edges": [["A", "M"], ["M", "Y"], ["A", "Y"], ["C", "A"], ["C", "M"], ["C", "Y"]],
               "bidirected": [["M", "Y"]]}
        assert CausalGraph.from_dict(obj).to_dict() == obj


class TestPaths:
    def test_two_mediator(self):
        paths = enumerate_causal_paths(TWO_MEDIATOR, "A", "Y")
        assert paths == [("A", "M", "W", "Y"), ("A", "M", "Y"), ("A", "W", "Y"), ("A", "Y")]

    def test_chain(self):
        assert enumerate_causal_paths(g([("A", "M"), ("M", "Y")]), "A", "Y") == [("A", "M", "Y")]

    def test_disconnected(self):
        assert enumerate_causal_paths(CausalGraph(["A", "Y"], []), "A", "Y") == []

    def test_unknown_vertex(self):
        with pytest.raises(GraphError):
            enumerate_causal_paths(TWO_MEDIATOR, "A", "Q")


@st.composite
def random_dag(draw, max_vertices=8):
    n = draw(st.integers(2, max_vertices))
    names = [f"v{i}" for i in range(n)]
    pairs = [(names[i], names[j]) for i, j in itertools.combinations(range(n), 2)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    order = draw(st.permutations(names))
    return CausalGraph(order, [p for p, k in zip(pairs, keep) if k])


@settings(max_examples=150, deadline=None)
@given(random_dag())
def test_paths_match_networkx(graph):
    src, dst = "v0", f"v{len(graph.vertices) - 1}"
    ours = enumerate_causal_paths(graph, src, dst)
    dg = nx.DiGraph()
    dg.add_nodes_from(graph.vertices)
    dg.add_edges_from(graph.directed_edges)
    oracle = sorted(tuple(p) for p in nx.all_simple_paths(dg, src, dst))
    assert ours == oracle


@settings(max_examples=100, deadline=None)
@given(random_dag())
def test_all_paths_is_adjustment(graph):
    dst = f"v{len(graph.vertices) - 1}"
    if not enumerate_causal_paths(graph, "v0", dst):
        return
    verdict = check_identification(graph, all_paths_spec(graph, "v0", dst))
    assert verdict.identified and verdict.strategy is Strategy.ADJUSTMENT


@settings(max_examples=100, deadline=None)
@given(random_dag(7), st.data())
def test_verdict_permutation_invariant(graph, data):
    dst = f"v{len(graph.vertices) - 1}"
    paths = enumerate_causal_paths(graph, "v0", dst)
    if not paths:
        return
    chosen = data.draw(st.lists(st.sampled_from(paths), min_size=1, unique=True))
    spec = PseSpec("v0", dst, 1, 0, chosen)
    perm = data.draw(st.permutations(list(graph.vertices)))
    mapping = dict(zip(graph.vertices, [f"u_{p}" for p in perm]))
    renamed = relabel(graph, mapping)
    spec2 = PseSpec(mapping["v0"], mapping[dst], 1, 0, [[mapping[v] for v in p] for p in chosen])
    a, b = check_identification(graph, spec), check_identification(renamed, spec2)
    assert (a.status, a.strategy, a.reason) == (b.status, b.strategy, b.reason)
    if a.witness:
        assert sorted(mapping[v] for v in a.witness) == sorted(b.witness)


class TestIdentification:
    def test_mediation_nde(self, fig):
        verdict = check_identification(*fig("mediation_graph.json", "mediation_nde.json"))
        assert verdict.identified and verdict.strategy is Strategy.MEDIATION_FORMULA
        assert verdict.witness is None

    def test_confounded_mediator_nde(self, fig):
        verdict = check_identification(*fig("confounded_mediator_graph.json", "confounded_mediator_nde.json"))
        assert verdict.status == "not_identified"
        assert set(verdict.witness) == {"M", "Y"}
        assert verdict.strategy is None

    def test_two_mediator_bundle(self, fig):
        verdict = check_identification(*fig("two_mediator_graph.json", "two_mediator_pse.json"))
        assert verdict.identified and verdict.strategy is Strategy.EDGE_G_FORMULA

    def test_district_path_set(self, fig):
        verdict = check_identification(*fig("district_graph.json", "district_pse.json"))
        assert verdict.identified and verdict.strategy is Strategy.GENERAL_PSE_PRODUCT

    def test_recanting_witness(self):
        # A->M->Y active but A->M->W->Y not: M recants
        verdict = check_identification(TWO_MEDIATOR, PseSpec("A", "Y", 1, 0, [("A", "M", "Y")]))
        assert verdict.status == "not_identified" and verdict.witness == ("M",)
        assert verdict.reason == "recanting witness"

    def test_confounded_treatment_is_unsupported(self):
        graph = g([("A", "M"), ("M", "Y"), ("A", "Y")], bidirected=[("A", "Y")])
        verdict = check_identification(graph, PseSpec("A", "Y", 1, 0, [("A", "Y")]))
        assert verdict.status == "not_identified" and verdict.reason == "unsupported pattern"

    def test_verdict_json(self, fig):
        verdict = check_identification(*fig("confounded_mediator_graph.json", "confounded_mediator_nde.json"))
        assert verdict.to_dict() == {"status": "not_identified", "witness": ["M", "Y"],
                                     "reason": "recanting district"}

    def test_deterministic(self, fig):
        inputs = fig("district_graph.json", "district_pse.json")
        assert check_identification(*inputs) == check_identification(*inputs)


class TestPseSpec:
    def test_round_trip(self):
        obj = {"treatment": "A", "outcome": "Y", "active": 1.0, "baseline": 0.0,
               "scale": "mean_difference", "paths": [["A", "Y"]]}
        assert PseSpec.from_dict(obj).to_dict() == obj

    @pytest.mark.parametrize("paths", [[], [("A", "W", "Y")], [("M", "Y")]])
    def test_invalid_paths(self, paths):
        graph = g([("A", "M"), ("M", "Y"), ("A", "Y")])
        with pytest.raises(GraphError):
            check_identification(graph, PseSpec("A", "Y", 1, 0, paths))

    def test_equal_values(self):
        graph = g([("A", "Y")])
        with pytest.raises(GraphError):
            check_identification(graph, PseSpec("A", "Y", 1, 1, [("A", "Y")]))


def test_mediators_topological():
    assert mediators(TWO_MEDIATOR, "A", "Y") == ["M", "W"]


def test_assignment_follows_nesting():
    # active along A->Y, A->M->Y, A->M->W->Y; baseline along A->W->Y
    spec = PseSpec("A", "Y", 1, 0, [("A", "Y"), ("A", "M", "Y"), ("A", "M", "W", "Y")])
    seen = treatment_assignment(TWO_MEDIATOR, spec)
    assert {v: seen[v] for v in ("M", "W", "Y")} == {"Y": 1.0, "M": 1.0, "W": 0.0}


def test_assignment_rejects_witness():
    with pytest.raises(GraphError):
        treatment_assignment(TWO_MEDIATOR, PseSpec("A", "Y", 1, 0, [("A", "M", "Y")]))
