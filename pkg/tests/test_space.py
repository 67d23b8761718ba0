import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarsehom.space import (
    Region,
    SpaceError,
    SpaceSpec,
    Window,
    WindowBudgetError,
    ball,
    build_window,
    r_boundary,
    region_volume,
)


def brute_l1_ball(n, radius):
    rng = range(-radius, radius + 1)
    return {p for p in itertools.product(rng, repeat=n) if sum(map(abs, p)) <= radius}


@pytest.mark.parametrize("n,radius", [(1, 5), (2, 2), (2, 6), (3, 3)])
def test_lattice_window_is_l1_ball(n, radius):
    w = build_window(SpaceSpec.lattice(n), radius)
    assert set(w.labels) == brute_l1_ball(n, radius)
    shell = {lab for lab in w.labels if sum(map(abs, lab)) == radius}
    assert {w.labels[i] for i in w.sinks} == shell


def test_lattice2_radius2_counts():
    w = build_window(SpaceSpec.lattice(2), 2)
    assert w.n_vertices == 13
    assert len(w.sinks) == 8


def test_tree_radius0_single_vertex():
    w = build_window(SpaceSpec.tree(3), 0)
    assert w.n_vertices == 1
    assert w.edges == []
    assert w.interior.tolist() == [True]


def test_path_of_seven():
    w = build_window(SpaceSpec.lattice(1), 3)
    assert w.n_vertices == 7
    assert sorted(w.labels[i] for i in w.sinks) == [(-3,), (3,)]


@pytest.mark.parametrize("depth", range(0, 7))
def test_tree_level_counts(depth):
    w = build_window(SpaceSpec.tree(3), depth)
    expected = 1 + sum(3 * 2 ** (j - 1) for j in range(1, depth + 1))
    assert w.n_vertices == expected
    degrees = np.bincount(w.edge_array().ravel(), minlength=w.n_vertices)
    assert all(degrees[i] == 3 for i in w.interior_vertices) or depth == 0


def test_ball_sizes():
    w = build_window(SpaceSpec.lattice(2), 4)
    assert len(ball(w, w.index((0, 0)), 1)) == 5
    assert len(ball(w, 3, 0)) == 1
    t = build_window(SpaceSpec.tree(3), 4)
    assert len(ball(t, t.index(()), 2)) == 10


def test_collar_on_path():
    w = build_window(SpaceSpec.lattice(1), 3)
    left = Region.of(w, [w.index((x,)) for x in (-3, -2, -1)])
    got = {w.labels[i] for i in r_boundary(w, left, 1)}
    assert got == {(-1,), (0,)}


def test_collar_of_point():
    w = build_window(SpaceSpec.lattice(2), 3)
    v = w.index((0, 0))
    got = set(r_boundary(w, Region.of(w, [v]), 1))
    assert got == {v} | set(w.adjacency[v])


def test_collar_of_ball_matches_brute_force():
    w = build_window(SpaceSpec.lattice(2), 6)
    R = ball(w, w.index((0, 0)), 3)
    got = {w.labels[i] for i in r_boundary(w, R, 1)}
    assert got == {lab for lab in w.labels if sum(map(abs, lab)) in (3, 4)}
    assert len(got) == 4 * 3 + 4 * 4


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.data())
def test_collar_definition_property(radius, r, data):
    w = build_window(SpaceSpec.lattice(2), radius)
    members = data.draw(st.sets(st.integers(0, w.n_vertices - 1), min_size=1,
                                max_size=w.n_vertices - 1))
    R = Region.of(w, members)
    inside = R.mask(w.n_vertices)
    D = np.array([w.distances_from(v) for v in range(w.n_vertices)])
    inner = [v for v in members if any(not inside[u] for u in w.adjacency[v])]
    outer = [u for u in range(w.n_vertices) if not inside[u]
             and any(inside[v] for v in w.adjacency[u])]
    expect = {x for x in range(w.n_vertices)
              if (not inside[x] and min(D[x, inner]) <= r) or (inside[x] and min(D[x, outer]) <= r)}
    assert set(r_boundary(w, R, r)) == expect


def test_collar_rejects_trivial_regions():
    w = build_window(SpaceSpec.lattice(1), 3)
    with pytest.raises(SpaceError):
        r_boundary(w, Region.of(w, []), 1)
    with pytest.raises(SpaceError):
        r_boundary(w, Region.of(w, range(w.n_vertices)), 1)


def test_distances_match_networkx():
    nx = pytest.importorskip("networkx")
    w = build_window(SpaceSpec.tree(3), 5)
    g = nx.Graph(w.edges)
    ref = nx.single_source_shortest_path_length(g, 7)
    d = w.distances_from(7)
    assert all(d[v] == ref[v] for v in range(w.n_vertices))
    assert w.distances_from(7, cutoff=2).max() == 2


def test_pairs_within_reach():
    w = build_window(SpaceSpec.lattice(2), 3)
    pairs = w.pairs_within(2)
    brute = sorted((x, y) for x in range(w.n_vertices) for y in range(x + 1, w.n_vertices)
                   if w.distance(x, y) <= 2)
    assert [tuple(p) for p in pairs] == brute


def test_budget_error():
    with pytest.raises(WindowBudgetError):
        build_window(SpaceSpec.lattice(3), 40, vertex_budget=1000)


def test_product_window():
    spec = SpaceSpec.product(SpaceSpec.lattice(1), SpaceSpec.tree(3))
    w = build_window(spec, 2)
    # neighbors of the root: 2 lattice moves + 3 tree moves
    assert len(w.adjacency[w.index(spec.root())]) == 5


def test_custom_validation_messages():
    with pytest.raises(SpaceError, match="edges"):
        SpaceSpec.custom([0, 1, 2], [(0, 1)])  # disconnected
    with pytest.raises(SpaceError, match="^n:"):
        SpaceSpec.lattice(7)
    with pytest.raises(SpaceError, match="^k:"):
        SpaceSpec.tree(1)
    with pytest.raises(SpaceError, match="bogus"):
        SpaceSpec.from_dict({"family": "lattice", "n": 2, "bogus": 1})


def test_custom_sinks_and_volumes():
    spec = SpaceSpec.custom("abcd", [("a", "b"), ("b", "c"), ("c", "d")],
                            volumes=[1, 2, 3, 4], sinks=["d"])
    w = build_window(spec, None)
    assert [w.labels[i] for i in w.sinks] == ["d"]
    assert region_volume(w, Region.of(w, [0, 1])) == 3.0


@pytest.mark.parametrize("spec", [SpaceSpec.lattice(2), SpaceSpec.tree(4),
                                  SpaceSpec.product(SpaceSpec.lattice(1), SpaceSpec.lattice(1)),
                                  SpaceSpec.custom([0, 1, 2], [(0, 1), (1, 2)], sinks=[2])])
def test_spec_and_window_round_trip(spec):
    d = json.loads(json.dumps(spec.to_dict()))
    assert SpaceSpec.from_dict(d) == spec
    w = build_window(spec, 2 if spec.family != "custom" else None)
    w2 = Window.from_dict(json.loads(json.dumps(w.to_dict())))
    assert w2.id == w.id
    assert w2.labels == w.labels
    assert np.array_equal(w2.interior, w.interior)


def test_window_id_is_deterministic():
    a = build_window(SpaceSpec.tree(3), 4)
    b = build_window(SpaceSpec.tree(3), 4)
    assert a.id == b.id
    assert a.id != build_window(SpaceSpec.tree(3), 5).id
