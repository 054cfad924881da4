import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdmmlab.graph import (
    Graph,
    GraphError,
    complete_graph,
    cycle_graph,
    directed_slot,
    generate_rgg,
    is_connected,
    load_graph,
    path_graph,
    rgg_radius,
    save_graph,
)


def test_triangle_slots(triangle):
    assert triangle.edges == ((0, 1), (0, 2), (1, 2))
    assert directed_slot(triangle, 0, 1) == 0
    assert directed_slot(triangle, 1, 0) == 3
    assert directed_slot(triangle, 2, 1) == 5


def test_slot_of_non_edge(path3):
    with pytest.raises(GraphError, match="not an edge"):
        directed_slot(path3, 0, 2)


@pytest.mark.parametrize("g, expected", [
    (complete_graph(3), True),
    (Graph(2, ()), False),
    (path_graph(3), True),
    (Graph(1, ()), True),
])
def test_is_connected(g, expected):
    assert is_connected(g) is expected


def test_degrees_and_neighbours():
    g = Graph(4, ((0, 1), (0, 2), (0, 3), (2, 3)))
    assert g.degrees.tolist() == [3, 1, 2, 2]
    assert g.neighbors[0] == (1, 2, 3)
    assert g.degrees.sum() == 2 * g.m


@pytest.mark.parametrize("edges, msg", [
    (((0, 0),), "self-loop"),
    (((0, 1), (0, 1)), "duplicate"),
    (((1, 0),), "i < j"),
    (((0, 5),), "outside"),
])
def test_invalid_edges(edges, msg):
    with pytest.raises(GraphError, match=msg):
        Graph(3, edges)


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 9))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True) if pairs else st.just([]))
    return Graph(n, tuple(sorted(chosen)))


@given(graphs())
def test_slots_are_a_bijection(g):
    slots = [g.slot(h, p) for h, p in g.slot_pairs()]
    assert sorted(slots) == list(range(2 * g.m))
    for i, j in g.edges:
        assert (g.slot(j, i) - g.slot(i, j)) % (2 * g.m) == g.m


@given(graphs())
def test_degree_sum(g):
    assert int(g.degrees.sum()) == 2 * g.m


def test_rgg_radius_uses_natural_log():
    assert rgg_radius(10) == pytest.approx(math.sqrt(2 * math.log(10) / 10))
    assert rgg_radius(10) == pytest.approx(0.6786, abs=1e-4)


def test_rgg_is_connected_and_reproducible():
    a = generate_rgg(10, seed=5)
    b = generate_rgg(10, seed=5)
    assert is_connected(a)
    assert a.edges == b.edges


def test_rgg_single_node():
    g = generate_rgg(1, 0.3, seed=0)
    assert g.n == 1 and g.m == 0 and is_connected(g)


def test_rgg_failure_reports_attempts():
    with pytest.raises(GraphError, match="not connected after 3 resamples"):
        generate_rgg(30, radius=0.01, seed=0, max_attempts=3)


def test_rgg_first_draw_connectivity_rate():
    connected = 0
    for seed in range(200):
        try:
            generate_rgg(10, seed=seed, max_attempts=1)
            connected += 1
        except GraphError:
            pass
    assert connected / 200 >= 0.8


def test_rgg_edges_respect_radius():
    # regenerate positions with the same stream to check the distance rule
    rng = np.random.default_rng(3)
    pos = rng.uniform(size=(12, 2))
    g = generate_rgg(12, radius=0.9, seed=np.random.default_rng(3), max_attempts=1)
    for i in range(12):
        for j in range(i + 1, 12):
            assert ((i, j) in g.edges) == (np.linalg.norm(pos[i] - pos[j]) <= 0.9)


def test_file_roundtrip(tmp_path):
    g = cycle_graph(5)
    p = tmp_path / "g.txt"
    save_graph(g, p)
    assert p.read_text().splitlines()[0] == "5 5"
    assert load_graph(p) == g


@pytest.mark.parametrize("text, msg", [
    ("3 1\n0 x\n", ":2: non-integer"),
    ("3 1\n0 1 2\n", ":2: expected 'i j'"),
    ("3 2\n0 1\n", "declares 2 edges, found 1"),
    ("3 1\n1 0\n", ":2: edge must satisfy i < j"),
    ("", ":1: empty"),
    ("3\n", ":1: expected 'n m'"),
])
def test_malformed_files(tmp_path, text, msg):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(GraphError, match=msg):
        load_graph(p)
