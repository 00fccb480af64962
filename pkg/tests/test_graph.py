import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reinforced_loops.errors import GraphError, InvalidTreeError, OracleLimitError, SingularityError
from reinforced_loops.graph import (
    BUNDLED_GRAPHS, AugmentedGraph, Graph, SpanningTree, as_full_graph, bundled_graph, enumerate_spanning_trees,
    graph_from_dict, graph_to_dict, green_function, laplacian, load_graph, matrix_tree_bruteforce,
    matrix_tree_value, tree_weight, with_root_weight,
)


def complete(n, w=1.0):
    vs = [str(i) for i in range(1, n + 1)]
    return Graph(vs, [(a, b, w) for a, b in itertools.combinations(vs, 2)])


def test_laplacian_two_vertices():
    g = Graph(["a", "b"], [("a", "b", 1.0)])
    assert laplacian(g).tolist() == [[1.0, -1.0], [-1.0, 1.0]]


def test_laplacian_triangle_diagonal_against_loop():
    g = Graph(["1", "2", "3"], [("1", "2", 1.0), ("2", "3", 3.0), ("1", "3", 2.0)])
    L = laplacian(g)
    expect = []
    for v in g.vertices:
        s = 0.0
        for a, b, w in g.edges:
            if v in (a, b):
                s += w
        expect.append(s)
    assert np.diag(L).tolist() == expect == [3.0, 4.0, 5.0]
    assert np.all(L.sum(axis=1) == 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=6, max_size=6))
def test_laplacian_rows_sum_to_zero(ws):
    vs = ["1", "2", "3", "4"]
    g = Graph(vs, [(a, b, w) for (a, b), w in zip(itertools.combinations(vs, 2), ws)])
    L = laplacian(g)
    assert np.all(np.abs(L.sum(axis=1)) <= 1e-12 * np.abs(L).max())


def test_spanning_tree_counts():
    assert len(enumerate_spanning_trees(complete(3))) == 3
    assert len(enumerate_spanning_trees(complete(4))) == 16
    path = Graph(["1", "2", "3"], [("1", "2", 1.0), ("2", "3", 1.0)])
    assert len(enumerate_spanning_trees(path)) == 1
    trees = enumerate_spanning_trees(complete(4))
    assert len({t.key() for t in trees}) == 16
    assert all(t.is_spanning_tree_of(complete(4)) for t in trees)


def test_enumeration_size_cap():
    with pytest.raises(OracleLimitError):
        enumerate_spanning_trees(complete(9))


def test_tree_weight():
    k3 = Graph(["1", "2", "3"], [("1", "2", 2.0), ("2", "3", 3.0), ("1", "3", 5.0)])
    assert tree_weight(SpanningTree.from_pairs([("1", "2"), ("2", "3")]), k3) == 6.0
    assert tree_weight(SpanningTree.from_pairs([("3", "2"), ("2", "1")]), k3) == 6.0
    assert tree_weight(SpanningTree.from_pairs([("a", "b")]), Graph(["a", "b"], [("a", "b", 3.0)])) == 3.0
    assert tree_weight(enumerate_spanning_trees(complete(4))[0], complete(4)) == 1.0
    path = Graph(["1", "2", "3"], [("1", "2", 1.0), ("2", "3", 1.0)])
    with pytest.raises(InvalidTreeError):
        tree_weight(SpanningTree.from_pairs([("1", "3"), ("2", "3")]), path)


def test_matrix_tree_examples():
    g = Graph(["a", "b"], [("a", "b", 2.5)])
    assert math.isclose(matrix_tree_value(g, [0.3, -0.7]), 2.5 * math.exp(-0.4), rel_tol=1e-12)
    assert math.isclose(matrix_tree_value(complete(3)), 3.0, rel_tol=1e-12)
    e = math.e
    assert math.isclose(matrix_tree_value(complete(3), [1.0, 0.0, 0.0]), e ** 2 + 2 * e, rel_tol=1e-12)


@pytest.mark.parametrize("name", BUNDLED_GRAPHS)
def test_matrix_tree_matches_bruteforce(name, rng):
    full, _ = as_full_graph(bundled_graph(name))
    for _ in range(100):
        u = rng.normal(0.0, 1.0, full.n)
        a, b = matrix_tree_value(full, u), matrix_tree_bruteforce(full, u)
        assert abs(a - b) <= 1e-10 * b


def test_green_function_examples():
    assert green_function(np.array([[0.25]]))[0, 0] == 4.0
    assert np.array_equal(green_function(np.eye(3)), np.eye(3))
    ag = bundled_graph("2-path+root")
    M = ag.dirichlet_matrix()  # [[2,-1],[-1,2]]
    G = green_function(M)
    hand = np.array([[2.0, 1.0], [1.0, 2.0]]) / 3.0
    assert np.allclose(G, hand, atol=1e-14)
    full = ag.full()
    Gf = green_function(laplacian(full), [ag.root_index])
    keep = [0, 1]
    assert np.allclose(Gf[np.ix_(keep, keep)] @ laplacian(full)[np.ix_(keep, keep)], np.eye(2), atol=1e-10)
    assert np.all(Gf[ag.root_index] == 0)


def test_green_function_single_vertex_root():
    ag = with_root_weight(bundled_graph("single-vertex+root"), 0.4)
    assert math.isclose(green_function(ag.dirichlet_matrix())[0, 0], 2.5)


def test_green_function_singular():
    with pytest.raises(SingularityError):
        green_function(laplacian(complete(3)))


def test_graph_validation():
    with pytest.raises(GraphError):
        Graph(["a"], [("a", "a", 1.0)])
    with pytest.raises(GraphError):
        Graph(["a", "b"], [("a", "b", 1.0), ("b", "a", 2.0)])
    with pytest.raises(GraphError):
        Graph(["a", "b", "c"], [("a", "b", 1.0)])
    with pytest.raises(GraphError):
        Graph(["a", "b"], [("a", "b", -1.0)])
    with pytest.raises(GraphError):
        Graph(["a", "b"], [("a", "b", float("nan"))])
    with pytest.raises(GraphError):
        AugmentedGraph(Graph(["a"]), "d", {"a": 0.0})
    with pytest.raises(GraphError):
        AugmentedGraph(Graph(["a"]), "a", {"a": 1.0})
    # zero weights are dropped, not stored
    g = Graph(["a", "b", "c"], [("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 0.0)])
    assert len(g.edges) == 2


def test_json_round_trip_and_unknown_keys(tmp_path):
    for name in BUNDLED_GRAPHS:
        g = bundled_graph(name)
        p = tmp_path / "g.json"
        p.write_text(json.dumps(graph_to_dict(g)))
        h = load_graph(str(p))
        assert as_full_graph(h)[0].W.tolist() == as_full_graph(g)[0].W.tolist()
    with pytest.raises(GraphError):
        graph_from_dict({"vertices": ["a"], "edges": [], "root": None, "root_weights": {}, "extra": 1})
    with pytest.raises(GraphError):
        graph_from_dict({"vertices": ["a", "b"], "edges": [{"u": "a", "v": "b", "w": 1, "x": 0}]})


def test_augmented_full_graph():
    ag = bundled_graph("triangle+root")
    full = ag.full()
    assert full.vertices[-1] == "d" and ag.root_index == 3
    assert np.allclose(ag.dirichlet_matrix(), laplacian(full)[:3, :3])
