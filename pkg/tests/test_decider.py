import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarsehom.acceptance import random_instance
from coarsehom.chains import Chain0, Chain1, boundary, full_boundary
from coarsehom.decider import (
    PSC,
    DecideConfig,
    FlowProblem,
    InfeasibleDemandError,
    Obstruction,
    TailSet,
    cut_count,
    decide,
    exhaustive_c_star,
    extract_tails,
    make_demand,
    min_capacity,
    psc_verdict,
    solve_feasibility,
)
from coarsehom.space import SpaceSpec, build_window

from oracles import lp_c_star

# C*(n) for all-ones demand on l1-ball windows of Z^2, reach 1
Z2_C_STAR = {4: 1.05, 8: 2.2045454545454546, 16: 4.535714285714286, 32: 9.227777777777778}


def path_space(n, sinks):
    return SpaceSpec.custom(list(range(n)), [(i, i + 1) for i in range(n - 1)], sinks=sinks)


def tree_c_star(depth):
    # outward equal splitting: load at depth j obeys L1 = 1/3, L(j+1) = (L(j) + 1) / 2
    load = 1 / 3
    for _ in range(depth - 1):
        load = (load + 1) / 2
    return load


def test_zero_demand():
    w = build_window(SpaceSpec.lattice(2), 3)
    res = min_capacity(FlowProblem(w, Chain0.zeros(w)))
    assert res.c_star == 0.0 and len(res.flow.pairs) == 0


def test_delta_with_single_escape_route():
    w = build_window(path_space(7, [6]), None)
    assert min_capacity(FlowProblem(w, Chain0.delta(w, 2))).c_star == pytest.approx(1.0)


def test_delta_on_seven_path_has_two_exits():
    w = build_window(SpaceSpec.lattice(1), 3)
    c = Chain0.delta(w, w.index((0,)))
    assert min_capacity(FlowProblem(w, c)).c_star == pytest.approx(0.5)
    assert lp_c_star(w, c, 1) == pytest.approx(0.5)


@pytest.mark.parametrize("depth", range(3, 9))
def test_tree_matches_outward_splitting_flow(depth):
    w = build_window(SpaceSpec.tree(3), depth)
    res = min_capacity(FlowProblem(w, make_demand(w, "all-ones")))
    assert res.c_star == pytest.approx(tree_c_star(depth), rel=1e-12)
    assert res.c_star <= 3


def test_tree_explicit_flow_is_feasible():
    w = build_window(SpaceSpec.tree(3), 5)
    depth = w.distances_from(w.index(()))
    items = []
    inflow = np.zeros(w.n_vertices)
    for v in np.argsort(depth, kind="stable"):
        if not w.interior[v]:
            continue
        kids = [u for u in w.adjacency[v] if depth[u] > depth[v]]
        share = (inflow[v] + 1.0) / len(kids)
        for u in kids:
            items.append((int(v), int(u), share))
            inflow[u] += share
    b = Chain1.from_items(w, 1, items)
    c = make_demand(w, "all-ones")
    assert np.allclose(boundary(b).coeffs, -c.coeffs)
    assert np.abs(b.values).max() == pytest.approx(tree_c_star(5))


@pytest.mark.parametrize("n", [4, 8])
def test_z2_against_lp(n):
    w = build_window(SpaceSpec.lattice(2), n)
    c = make_demand(w, "all-ones")
    assert lp_c_star(w, c, 1) == pytest.approx(Z2_C_STAR[n], rel=1e-7)


@pytest.mark.parametrize("n", sorted(Z2_C_STAR))
def test_z2_frozen_values(n):
    w = build_window(SpaceSpec.lattice(2), n)
    res = min_capacity(FlowProblem(w, make_demand(w, "all-ones")))
    assert res.c_star == pytest.approx(Z2_C_STAR[n], rel=1e-9)
    mass = len(res.region)
    assert mass / cut_count(w, res.region.members, 1) == pytest.approx(res.c_star)


def test_z2_obstruction_region_is_symmetric():
    w = build_window(SpaceSpec.lattice(2), 16)
    out = solve_feasibility(FlowProblem(w, make_demand(w, "all-ones"), 1, 1.0))
    assert isinstance(out, Obstruction) and out.is_valid()
    labels = {w.labels[v] for v in out.region}
    assert (0, 0) in labels
    for x, y in labels:
        assert {(y, x), (-x, y), (x, -y)} <= labels


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duality_against_both_oracles(seed):
    w, c, reach = random_instance(np.random.default_rng(seed))
    res = min_capacity(FlowProblem(w, c, reach))
    brute, region = exhaustive_c_star(w, c, reach)
    assert res.c_star == pytest.approx(brute, abs=1e-6)
    assert res.c_star == pytest.approx(lp_c_star(w, c, reach), abs=1e-6)
    if res.region is not None:
        mass = abs(c.coeffs[list(res.region.members)].sum())
        assert mass / cut_count(w, res.region.members, reach) == pytest.approx(res.c_star)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_c_star_is_homogeneous(seed, t):
    w, c, reach = random_instance(np.random.default_rng(seed))
    a = min_capacity(FlowProblem(w, c, reach)).c_star
    b = min_capacity(FlowProblem(w, c * t, reach)).c_star
    assert b == pytest.approx(t * a, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_larger_reach_never_costs_more(seed):
    w, c, _ = random_instance(np.random.default_rng(seed))
    caps = [min_capacity(FlowProblem(w, c, r)).c_star for r in (1, 2, 3)]
    assert caps[0] >= caps[1] - 1e-12 >= caps[2] - 2e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_certificates_flip_across_c_star(seed):
    w, c, reach = random_instance(np.random.default_rng(seed))
    c_star = min_capacity(FlowProblem(w, c, reach)).c_star
    lo = solve_feasibility(FlowProblem(w, c, reach, 0.9 * c_star))
    hi = solve_feasibility(FlowProblem(w, c, reach, 1.1 * c_star))
    assert isinstance(lo, Obstruction) and lo.is_valid()
    assert isinstance(hi, TailSet) and hi.is_valid()
    assert not hi.boundary_case


def test_window_growth_is_monotone_for_all_ones():
    caps = []
    for n in (2, 3, 4, 5, 6):
        w = build_window(SpaceSpec.lattice(2), n)
        caps.append(min_capacity(FlowProblem(w, make_demand(w, "all-ones"))).c_star)
    assert caps == sorted(caps)


def test_tree_tails_end_at_leaves():
    w = build_window(SpaceSpec.tree(3), 6)
    out = solve_feasibility(FlowProblem(w, make_demand(w, "all-ones"), 1, 3.0))
    assert isinstance(out, TailSet) and out.is_valid()
    assert all(not w.interior[path[-1]] for path, _ in out.paths)
    assert not out.cycles_discarded


def test_mixed_sign_pair_is_one_edge():
    w = build_window(SpaceSpec.lattice(2), 4)
    x, y = w.index((0, 0)), w.index((1, 0))
    c = Chain0.from_items(w, [(y, 1.0), (x, -1.0)])
    out = solve_feasibility(FlowProblem(w, c, 1, 1.0))
    assert isinstance(out, TailSet) and out.is_valid()
    assert out.paths == [((y, x), 1.0)]


def test_boundary_case_flag():
    w = build_window(SpaceSpec.lattice(2), 4)
    c = make_demand(w, "all-ones")
    out = solve_feasibility(FlowProblem(w, c, 1, Z2_C_STAR[4]))
    assert isinstance(out, TailSet) and out.boundary_case


def test_extract_single_path():
    w = build_window(SpaceSpec.lattice(1), 5)
    path = [w.index((x,)) for x in range(0, 6)]
    flow = Chain1.along_path(w, 1, path)
    c = Chain0.delta(w, path[0])
    tails = extract_tails(flow, c)
    assert tails.paths == [(tuple(path), 1.0)]
    assert not tails.cycles_discarded


def test_extract_two_disjoint_paths():
    w = build_window(SpaceSpec.lattice(1), 4)
    x = w.index((0,))
    right = [w.index((k,)) for k in range(0, 5)]
    left = [w.index((-k,)) for k in range(0, 5)]
    flow = Chain1.along_path(w, 1, right) + Chain1.along_path(w, 1, left)
    tails = extract_tails(flow, Chain0.delta(w, x, 2.0))
    assert sorted(tails.paths) == sorted([(tuple(right), 1.0), (tuple(left), 1.0)])


def test_extract_discards_cycle():
    w = build_window(SpaceSpec.lattice(2), 5)
    i = lambda *p: w.index(p)  # noqa: E731
    path = [i(0, 0), i(1, 0), i(2, 0), i(3, 0), i(4, 0), i(5, 0)]
    cycle = [i(-1, 1), i(-1, 2), i(-2, 2), i(-2, 1), i(-1, 1)]
    flow = Chain1.along_path(w, 1, path) + Chain1.along_path(w, 1, cycle)
    tails = extract_tails(flow, Chain0.delta(w, path[0]))
    assert tails.cycles_discarded
    assert len(tails.paths) == 1
    assert tails.paths == [(tuple(path), 1.0)]


def test_extract_cancels_cycle_met_during_walk():
    # the smallest-id arc out of vertex 1 enters the triangle 1-2-3
    spec = SpaceSpec.custom(range(5), [(0, 1), (1, 2), (2, 3), (1, 3), (1, 4)], sinks=[4])
    w = build_window(spec, None)
    flow = Chain1.from_items(w, 1, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0), (1, 4, 1.0)])
    tails = extract_tails(flow, Chain0.delta(w, 0))
    assert tails.cycles_discarded
    assert tails.paths == [((0, 1, 4), 1.0)]


def test_no_sinks_nonzero_total_is_infeasible():
    spec = SpaceSpec.custom([0, 1, 2], [(0, 1), (1, 2)], sinks=[])
    w = build_window(spec, None)
    with pytest.raises(InfeasibleDemandError):
        min_capacity(FlowProblem(w, Chain0.delta(w, 1)))
    balanced = Chain0.from_items(w, [(0, 1.0), (2, -1.0)])
    assert min_capacity(FlowProblem(w, balanced)).c_star == pytest.approx(1.0)


def test_certificates_serialize():
    w = build_window(SpaceSpec.lattice(2), 4)
    c = make_demand(w, "all-ones")
    for cap in (0.5, 2.0):
        d = solve_feasibility(FlowProblem(w, c, 1, cap)).to_dict()
        assert json.loads(json.dumps(d)) == d


def test_decide_examples():
    z2 = decide(SpaceSpec.lattice(2), "all-ones", 1, [4, 8, 16, 32])
    assert z2.status == "Obstructed" and z2.fit.slope == pytest.approx(1.0, abs=0.1)
    assert z2.witness is not None and z2.witness.is_valid()
    tree = decide(SpaceSpec.tree(3), "all-ones", 1, range(3, 9))
    assert tree.status == "Vanishes" and tree.c_sup <= 3
    alt = decide(SpaceSpec.lattice(1), "alternating", 1, [8, 16, 32])
    assert alt.status == "Vanishes" and alt.c_sup <= 2
    assert alt.fit is None


def test_decide_three_sizes_detects_growth_without_reporting_fit():
    v = decide(SpaceSpec.lattice(2), "all-ones", 1, [4, 8, 16])
    assert v.status == "Obstructed" and v.fit is None
    assert "provisional_fit" in v.diagnostics


def test_decide_thresholds_are_configuration():
    v = decide(SpaceSpec.lattice(2), "all-ones", 1, [4, 8, 16, 32],
               DecideConfig(slope_threshold=2.0))
    assert v.status != "Obstructed"


def test_decide_parallel_matches_serial(monkeypatch):
    serial = decide(SpaceSpec.tree(3), "all-ones", 1, [5, 3, 4, 6])
    monkeypatch.setenv("COARSEHOM_THREADS", "2")
    par = decide(SpaceSpec.tree(3), "all-ones", 1, [5, 3, 4, 6])
    assert par.to_dict() == serial.to_dict()
    assert par.sizes == (3, 4, 5, 6)


def test_demand_rules():
    w = build_window(SpaceSpec.lattice(2), 4)
    assert make_demand(w, "delta").total() == 1.0
    sub = make_demand(w, "sublattice:2")
    assert all(lab[0] % 2 == 0 and lab[1] % 2 == 0 for lab in (w.labels[v] for v in sub.support))
    with pytest.raises(ValueError, match="demand"):
        make_demand(w, "nope")


def test_psc_trichotomy():
    z2 = decide(SpaceSpec.lattice(2), "all-ones", 1, [4, 8, 16, 32])
    tree = decide(SpaceSpec.tree(3), "all-ones", 1, [3, 4, 5, 6])
    assert psc_verdict(z2, 1) is PSC.NO_NONNEGATIVE_SCALAR_CURVATURE
    assert psc_verdict(tree, 1) is PSC.ADMITS_UPSC
    assert psc_verdict(z2, 0) is PSC.ADMITS_UPSC_BY_SURGERY
    assert psc_verdict(tree, 0) is PSC.ADMITS_UPSC_BY_SURGERY


def test_full_boundary_of_min_flow_routes_demand():
    w = build_window(SpaceSpec.lattice(2), 8)
    c = make_demand(w, "all-ones")
    res = min_capacity(FlowProblem(w, c))
    d = full_boundary(res.flow)
    assert np.allclose(d[w.interior], -c.coeffs[w.interior], atol=1e-9)
    assert d[~w.interior].sum() == pytest.approx(c.total())
    assert np.abs(res.flow.values).max() <= res.c_star * (1 + 1e-9)
