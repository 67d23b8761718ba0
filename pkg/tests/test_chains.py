import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarsehom.chains import (
    Chain0,
    Chain1,
    ChainError,
    boundary,
    escaped_mass,
    full_boundary,
    throughput,
    uf_norm0,
    window_sum,
)
from coarsehom.decider import make_demand
from coarsehom.space import Region, SpaceSpec, build_window


@pytest.fixture(scope="module")
def grid():
    return build_window(SpaceSpec.lattice(2), 5)


@pytest.fixture(scope="module")
def line():
    return build_window(SpaceSpec.lattice(1), 10)


def idx(w, *lab):
    return w.index(tuple(lab))


def test_single_edge_boundary(grid):
    x, y = idx(grid, 0, 0), idx(grid, 1, 0)
    d = boundary(Chain1.from_items(grid, 1, [(x, y, 1.0)])).coeffs
    expect = np.zeros(grid.n_vertices)
    expect[y], expect[x] = 1.0, -1.0
    assert np.array_equal(d, expect)


def test_path_telescopes(grid):
    path = [idx(grid, 0, 0), idx(grid, 1, 0), idx(grid, 1, 1), idx(grid, 0, 1)]
    d = boundary(Chain1.along_path(grid, 1, path)).coeffs
    assert d[path[-1]] == 1.0 and d[path[0]] == -1.0
    assert np.count_nonzero(d) == 2


def test_cycle_is_closed(grid):
    cyc = [idx(grid, 0, 0), idx(grid, 1, 0), idx(grid, 1, 1), idx(grid, 0, 1), idx(grid, 0, 0)]
    assert not boundary(Chain1.along_path(grid, 1, cyc)).coeffs.any()


def test_boundary_drops_sinks_and_counts_escape(line):
    path = [idx(line, x) for x in range(7, 11)]  # ends at the sink x=10
    b = Chain1.along_path(line, 1, path, 2.0)
    assert boundary(b).coeffs[path[-1]] == 0.0
    assert full_boundary(b)[path[-1]] == 2.0
    assert escaped_mass(b) == 2.0


def test_reach_is_enforced(grid):
    x, y = idx(grid, 0, 0), idx(grid, 2, 0)
    with pytest.raises(ChainError):
        Chain1.from_items(grid, 1, [(x, y, 1.0)])
    Chain1.from_items(grid, 2, [(x, y, 1.0)])


def test_chain0_support_must_be_interior(line):
    c = np.zeros(line.n_vertices)
    c[line.sinks[0]] = 1.0
    with pytest.raises(ChainError):
        Chain0(line, c)


def test_uf_norm_examples(grid):
    assert uf_norm0(make_demand(grid, "all-ones"), 1) == 5.0
    assert uf_norm0(Chain0.delta(grid, idx(grid, 1, 1)), 3) == 1.0
    assert uf_norm0(Chain0.zeros(grid), 1) == 0.0


def test_throughput_examples(grid):
    a, v, b = idx(grid, -1, 0), idx(grid, 0, 0), idx(grid, 1, 0)
    assert throughput(Chain1.from_items(grid, 1, [(a, v, 1.0)])) == 1.0
    assert throughput(Chain1.from_items(grid, 1, [(a, v, 1.0), (v, b, 1.0)])) == 2.0


def test_throughput_along_path(line):
    path = [idx(line, x) for x in range(-3, 4)]
    b = Chain1.along_path(line, 1, path)
    load = np.zeros(line.n_vertices)
    for (x, y), val in zip(b.pairs, b.values):
        load[x] += abs(val)
        load[y] += abs(val)
    assert load[path[0]] == load[path[-1]] == 1.0
    assert all(load[p] == 2.0 for p in path[1:-1])


def test_window_sum_examples(grid, line):
    R = Region.of(grid, grid.interior_vertices[:9])
    assert window_sum(make_demand(grid, "all-ones"), R) == 9.0
    alt = make_demand(line, "alternating")
    assert window_sum(alt, [idx(line, x) for x in range(-4, 2)]) == 0.0
    assert window_sum(Chain0.zeros(grid), R) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 3), st.floats(-5, 5)),
                min_size=1, max_size=30))
def test_boundary_conserves_mass(items):
    w = build_window(SpaceSpec.lattice(2), 5)
    pairs = w.pairs_within(1)
    chosen = [(int(pairs[i % len(pairs), 0]), int(pairs[i % len(pairs), 1]), v)
              for i, _, v in items]
    b = Chain1.from_items(w, 1, chosen)
    d = full_boundary(b)
    assert abs(d.sum()) < 1e-9
    assert abs(boundary(b).total() + escaped_mass(b)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=61, max_size=61), st.floats(0.1, 4))
def test_uf_norm_scales_and_is_subadditive(vals, t):
    w = build_window(SpaceSpec.lattice(2), 5)
    v = np.array(vals) * w.interior
    c = Chain0(w, v)
    d = Chain0(w, np.roll(v, 7) * w.interior)
    assert abs(uf_norm0(c * t, 1) - t * uf_norm0(c, 1)) < 1e-9 * (1 + t * uf_norm0(c, 1))
    assert uf_norm0(c + d, 1) <= uf_norm0(c, 1) + uf_norm0(d, 1) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10), st.floats(-2, 2)), max_size=15))
def test_chain1_sum_is_linear(items):
    w = build_window(SpaceSpec.lattice(1), 10)
    pairs = [(i, i + 1) for i in range(w.n_vertices - 1)]
    a = Chain1.from_items(w, 1, [(*pairs[i % len(pairs)], v) for i, _, v in items])
    b = Chain1.from_items(w, 1, [(*pairs[j % len(pairs)], -v) for _, j, v in items])
    assert np.allclose(full_boundary(a + b), full_boundary(a) + full_boundary(b))


def test_round_trip(grid):
    c = make_demand(grid, "alternating")
    assert np.array_equal(Chain0.from_dict(grid, json.loads(json.dumps(c.to_dict()))).coeffs, c.coeffs)
    b = Chain1.from_items(grid, 2, [(0, 1, 0.5), (3, 2, 1.25)])
    b2 = Chain1.from_dict(grid, json.loads(json.dumps(b.to_dict())))
    assert np.array_equal(b2.pairs, b.pairs) and np.array_equal(b2.values, b.values)
    other = build_window(SpaceSpec.lattice(2), 4)
    with pytest.raises(ChainError):
        Chain0.from_dict(other, c.to_dict())
