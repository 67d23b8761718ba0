"""Vanishing of uniformly finite 0-classes via uniform-capacity flows.

For a demand ``c`` on a window and a reach ``r`` every pair of vertices at
distance ``<= r`` is an undirected edge of capacity ``C``; the sinks are merged
into one super-vertex of free balance. A flow ``b`` with ``boundary(b) = -c``
on the interior exists iff ``|c(R)| <= C * cut_r(R)`` for every region ``R`` of
interior vertices, where ``cut_r(R)`` counts reach-pairs leaving ``R``. The
least such ``C`` is found by Dinkelbach iteration on the parametric min cut,
which lands exactly on the ratio of a maximizing region.
"""
from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chains import Chain0, Chain1, ChainError, full_boundary, throughput
from .maxflow import INF, FlowGraph
from .space import Region, SpaceSpec, Window, build_window

log = logging.getLogger(__name__)

FLOW_TOL = 1e-9
CAPACITY_TOL = 1e-6
MAX_ITERATIONS = 200


class DecisionError(RuntimeError):
    """Numerical failure inside the decider."""


class InfeasibleDemandError(DecisionError):
    """No capacity routes the demand (a sink-free component carries net mass)."""


class NonConvergenceError(DecisionError):
    def __init__(self, msg, lower, upper):
        super().__init__(f"{msg}; C* in [{lower:.12g}, {upper:.12g}]")
        self.lower = lower
        self.upper = upper


@dataclass(frozen=True)
class FlowProblem:
    window: Window
    demand: Chain0
    reach: int = 1
    capacity: float | None = None  # None means "minimize"

    def __post_init__(self):
        if self.reach < 1:
            raise ValueError("reach: must be >= 1")
        if self.demand.window is not self.window and self.demand.window.id != self.window.id:
            raise ValueError("demand lives on a different window")
        if self.capacity is not None and not self.capacity > 0:
            raise ValueError("capacity: must be positive")


def cut_count(w: Window, members, reach: int) -> int:
    """Number of reach-pairs with exactly one end in ``members``."""
    inside = np.zeros(w.n_vertices, dtype=bool)
    inside[list(members)] = True
    pairs = w.pairs_within(reach)
    if not len(pairs):
        return 0
    return int(np.count_nonzero(inside[pairs[:, 0]] != inside[pairs[:, 1]]))


class _Network:
    """Flow network for one (window, demand, reach); capacity is a parameter."""

    def __init__(self, w: Window, demand: Chain0, reach: int):
        self.w = w
        self.c = demand.coeffs
        self.reach = reach
        n = w.n_vertices
        self.z, self.s, self.t = n, n + 1, n + 2
        self.g = FlowGraph(n + 3)
        interior = w.interior
        pairs = w.pairs_within(reach)
        keep = interior[pairs[:, 0]] | interior[pairs[:, 1]] if len(pairs) else np.zeros(0, bool)
        self.pairs = pairs[keep]
        self.edge_arcs = [self.g.add_edge(int(x), int(y), 0.0) for x, y in self.pairs]
        for v in w.sinks:
            self.g.add_edge(int(v), self.z, INF)
        self.supply_total = 0.0
        for v in np.flatnonzero(self.c):
            cv = float(self.c[v])
            if cv > 0:
                self.g.add_arc(self.s, int(v), cv)
                self.supply_total += cv
            else:
                self.g.add_arc(int(v), self.t, -cv)
        net = -float(self.c.sum())
        has_sinks = len(w.sinks) > 0
        if abs(net) > FLOW_TOL * max(1.0, float(np.abs(self.c).sum())):
            if not has_sinks:
                raise InfeasibleDemandError("window has no sinks and the demand has nonzero total")
            if net > 0:
                self.g.add_arc(self.s, self.z, net)
                self.supply_total += net
            else:
                self.g.add_arc(self.z, self.t, -net)
        self.tol = FLOW_TOL * max(1.0, self.supply_total)

    def run(self, capacity: float) -> bool:
        for a in self.edge_arcs:
            self.g.set_capacity(a, capacity, capacity)
        self.value = self.g.max_flow(self.s, self.t)
        return self.value >= self.supply_total - self.tol

    def flow(self) -> Chain1:
        vals = np.array([self.g.flow_on(a) for a in self.edge_arcs])
        keep = np.abs(vals) > self.g.eps
        return Chain1(self.w, self.reach, self.pairs[keep], vals[keep], _checked=True)

    def violated_region(self) -> tuple[Region, int]:
        """Region and sign read off the minimal min cut of the last run."""
        side = self.g.source_side(self.s)
        interior = self.w.interior_vertices
        if side[self.z]:
            members = [int(v) for v in interior if not side[v]]
            sign = -1
        else:
            members = [int(v) for v in interior if side[v]]
            sign = 1
        return Region.of(self.w, members), sign


@dataclass(frozen=True, eq=False)
class CapacityResult:
    c_star: float
    flow: Chain1
    region: Region | None
    sign: int
    iterations: int

    def __iter__(self):
        # allows ``c_star, flow = min_capacity(p)``
        return iter((self.c_star, self.flow))


def min_capacity(p: FlowProblem) -> CapacityResult:
    """Least uniform edge capacity routing ``p.demand`` to the sinks.

    Returns the optimum, a flow feasible at it, and the region attaining
    ``max |c(R)| / cut_r(R)``.
    """
    w, c = p.window, p.demand
    if not np.any(c.coeffs):
        return CapacityResult(0.0, Chain1(w, p.reach, np.zeros((0, 2)), np.zeros(0)), None, 1, 0)
    net = _Network(w, c, p.reach)
    cap = 0.0
    best_region, best_sign = None, 1
    for it in range(1, MAX_ITERATIONS + 1):
        if net.run(cap):
            return CapacityResult(cap, net.flow(), best_region, best_sign, it)
        region, sign = net.violated_region()
        cut = cut_count(w, region.members, p.reach)
        mass = abs(float(c.coeffs[list(region.members)].sum()))
        if cut == 0:
            raise InfeasibleDemandError(
                f"region of {len(region)} vertices carries mass {mass:g} but has no exit")
        ratio = mass / cut
        if ratio <= cap * (1 + 1e-12):
            # the cut and the flow disagree only by rounding; accept if tiny
            deficit = net.supply_total - net.value
            if deficit <= CAPACITY_TOL * max(1.0, net.supply_total):
                return CapacityResult(cap, net.flow(), best_region, best_sign, it)
            raise NonConvergenceError("parametric search stalled", cap, float(np.abs(c.coeffs).sum()))
        cap, best_region, best_sign = ratio, region, sign
    raise NonConvergenceError("iteration limit reached", cap, float(np.abs(c.coeffs).sum()))


# certificates ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TailSet:
    """Weighted paths carrying the demand to the sinks.

    Paths run from positive demand (or from a sink) to negative demand (or to
    a sink); consecutive vertices are within ``reach``.
    """

    window: Window
    demand: Chain0
    reach: int
    capacity: float | None
    paths: list[tuple[tuple[int, ...], float]]
    cycles_discarded: bool = False
    boundary_case: bool = False

    def as_chain(self) -> Chain1:
        items = []
        for path, wt in self.paths:
            items.extend((path[i], path[i + 1], wt) for i in range(len(path) - 1))
        return Chain1.from_items(self.window, self.reach, items)

    def check(self, tol: float = FLOW_TOL) -> list[str]:
        """Independent re-verification from raw data; returns problems found."""
        w, c = self.window, self.demand.coeffs
        problems = []
        scale = max(1.0, float(np.abs(c).sum()))
        near = {tuple(x) for x in w.pairs_within(self.reach)}
        for k, (path, wt) in enumerate(self.paths):
            if len(path) < 2 or not wt > 0:
                problems.append(f"path {k}: degenerate")
                continue
            for a, b in zip(path, path[1:]):
                if (min(a, b), max(a, b)) not in near:
                    problems.append(f"path {k}: step {a}->{b} longer than reach")
            start, end = path[0], path[-1]
            if w.interior[start] and not c[start] > 0:
                problems.append(f"path {k}: starts outside the positive support")
            if w.interior[end] and not c[end] < 0:
                problems.append(f"path {k}: ends at interior vertex {end} without negative demand")
        flow = self.as_chain()
        div = full_boundary(flow)
        resid = np.abs(div + c)[w.interior]
        if resid.size and resid.max() > tol * scale:
            problems.append(f"divergence mismatch {resid.max():.3g}")
        if self.capacity is not None and len(flow.values):
            load = float(np.abs(flow.values).max())
            if load > self.capacity * (1 + tol) + tol:
                problems.append(f"edge load {load:.12g} exceeds capacity {self.capacity:.12g}")
        return problems

    def is_valid(self) -> bool:
        return not self.check()

    def to_dict(self) -> dict:
        return {
            "type": "TailSet",
            "capacity": self.capacity,
            "reach": self.reach,
            "cycles_discarded": self.cycles_discarded,
            "boundary_case": self.boundary_case,
            "paths": [{"path": [int(v) for v in p], "weight": float(wt)} for p, wt in self.paths],
        }


@dataclass(frozen=True, eq=False)
class Obstruction:
    """A region whose demand excess beats the capacity of its reach-cut.

    ``potential`` is the signed indicator of the region: it is 1-Lipschitz on
    reach-pairs, vanishes on sinks and pairs against the demand to more than
    ``capacity`` times its total variation, which rules out any feasible flow.
    """

    window: Window
    demand: Chain0
    reach: int
    capacity: float
    region: Region
    potential: np.ndarray
    violation: float

    def check(self, tol: float = FLOW_TOL) -> list[str]:
        w, c, u = self.window, self.demand.coeffs, self.potential
        problems = []
        members = list(self.region.members)
        if not members:
            return ["empty region"]
        if not w.interior[members].all():
            problems.append("region leaves the interior")
        mass = abs(float(c[members].sum()))
        cut = cut_count(w, members, self.reach)
        if not mass > self.capacity * cut:
            problems.append(f"|c(R)| = {mass:.12g} does not exceed C*cut = {self.capacity * cut:.12g}")
        if np.any(u[~w.interior] != 0):
            problems.append("potential nonzero on a sink")
        pairs = w.pairs_within(self.reach)
        jumps = np.abs(u[pairs[:, 0]] - u[pairs[:, 1]]) if len(pairs) else np.zeros(0)
        if jumps.size and jumps.max() > 1 + tol:
            problems.append("potential is not 1-Lipschitz on reach-pairs")
        pairing = float(c @ u)
        variation = float(jumps.sum())
        if not pairing > self.capacity * variation:
            problems.append("dual pairing does not beat capacity times variation")
        if abs(self.violation - (mass - self.capacity * cut)) > tol * max(1.0, mass):
            problems.append("stored violation disagrees with recomputation")
        return problems

    def is_valid(self) -> bool:
        return not self.check()

    def to_dict(self) -> dict:
        return {
            "type": "Obstruction",
            "capacity": self.capacity,
            "reach": self.reach,
            "region": [int(v) for v in self.region.members],
            "region_mass": float(self.demand.coeffs[list(self.region.members)].sum()),
            "cut": cut_count(self.window, self.region.members, self.reach),
            "violation": self.violation,
        }


def _obstruction(p: FlowProblem, region: Region, sign: int) -> Obstruction:
    w, c = p.window, p.demand.coeffs
    u = np.zeros(w.n_vertices)
    u[list(region.members)] = float(sign)
    mass = abs(float(c[list(region.members)].sum()))
    violation = mass - p.capacity * cut_count(w, region.members, p.reach)
    return Obstruction(w, p.demand, p.reach, p.capacity, region, u, violation)


def extract_tails(flow: Chain1, demand: Chain0, capacity: float | None = None,
                  tol: float = FLOW_TOL) -> TailSet:
    """Decompose ``flow`` into weighted paths; cycles are cancelled and dropped."""
    w = flow.window
    c = demand.coeffs
    scale = max(1.0, float(np.abs(c).sum()))
    div = full_boundary(flow)
    mismatch = np.abs(div + c)[w.interior]
    if mismatch.size and mismatch.max() > tol * scale:
        raise ChainError(f"flow divergence does not match the demand (off by {mismatch.max():.3g})")

    out: dict[int, dict[int, float]] = {}
    for (x, y), v in zip(flow.pairs, flow.values):
        x, y, v = int(x), int(y), float(v)
        if v > 0:
            out.setdefault(x, {})[y] = v
        elif v < 0:
            out.setdefault(y, {})[x] = -v
    # net outflow still to be routed: demand on the interior, measured on sinks
    excess = -div
    excess[w.interior] = c[w.interior]
    eps = tol * scale

    def next_arc(v):
        arcs = out.get(v)
        if not arcs:
            return None
        for y in sorted(arcs):
            if arcs[y] > eps:
                return y
            del arcs[y]
        return None

    def take(v, y, amount):
        arcs = out[v]
        arcs[y] -= amount
        if arcs[y] <= eps:
            del arcs[y]

    paths = []
    cycles = False
    for start in range(w.n_vertices):
        while excess[start] > eps:
            path = [start]
            pos = {start: 0}
            while True:
                v = path[-1]
                if v != start and excess[v] < -eps:
                    break
                y = next_arc(v)
                if y is None:
                    path = None
                    break
                if y in pos:
                    cyc = path[pos[y]:] + [y]
                    amt = min(out[a][b] for a, b in zip(cyc, cyc[1:]))
                    for a, b in zip(cyc, cyc[1:]):
                        take(a, b, amt)
                    cycles = True
                    for q in path[pos[y] + 1:]:
                        del pos[q]
                    del path[pos[y] + 1:]
                    continue
                pos[y] = len(path)
                path.append(y)
            if path is None:
                # leftover below tolerance
                excess[start] = 0.0
                break
            end = path[-1]
            wt = min(excess[start], -excess[end], min(out[a][b] for a, b in zip(path, path[1:])))
            for a, b in zip(path, path[1:]):
                take(a, b, wt)
            excess[start] -= wt
            excess[end] += wt
            paths.append((tuple(path), float(wt)))
    if any(v > eps for arcs in out.values() for v in arcs.values()):
        cycles = True
    return TailSet(w, demand, flow.span, capacity, paths, cycles_discarded=cycles)


def solve_feasibility(p: FlowProblem) -> TailSet | Obstruction:
    """Route ``p.demand`` at the fixed capacity, or certify that it cannot be."""
    if p.capacity is None:
        raise ValueError("capacity: solve_feasibility needs a fixed capacity")
    if not np.any(p.demand.coeffs):
        return TailSet(p.window, p.demand, p.reach, p.capacity, [])
    net = _Network(p.window, p.demand, p.reach)
    if net.run(p.capacity):
        tails = extract_tails(net.flow(), p.demand, p.capacity)
        tight = not _Network(p.window, p.demand, p.reach).run(p.capacity * (1 - CAPACITY_TOL))
        return TailSet(tails.window, tails.demand, tails.reach, p.capacity, tails.paths,
                       tails.cycles_discarded, boundary_case=tight)
    region, sign = net.violated_region()
    return _obstruction(p, region, sign)


def exhaustive_c_star(w: Window, demand: Chain0, reach: int, max_vertices: int = 20):
    """Brute-force ``max |c(R)| / cut_r(R)`` over all nonempty interior regions.

    Independent of the flow machinery; used as an oracle on small windows.
    """
    interior = w.interior_vertices
    m = len(interior)
    if m > max_vertices:
        raise ValueError(f"{m} interior vertices is too many for enumeration")
    masks = np.arange(1, 2 ** m, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)  # (regions, m)
    full = np.zeros((len(masks), w.n_vertices), dtype=bool)
    full[:, interior] = member
    mass = np.abs(full.astype(float) @ demand.coeffs)
    pairs = w.pairs_within(reach)
    cut = np.count_nonzero(full[:, pairs[:, 0]] != full[:, pairs[:, 1]], axis=1) if len(pairs) \
        else np.zeros(len(masks), dtype=np.int64)
    if np.any((cut == 0) & (mass > 0)):
        return math.inf, None
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cut > 0, mass / np.maximum(cut, 1), 0.0)
    k = int(np.argmax(ratio))
    return float(ratio[k]), Region.of(w, interior[member[k]])


# demand families ------------------------------------------------------------

def make_demand(w: Window, rule: str) -> Chain0:
    """Deterministic interior 0-chain from a named rule.

    ``all-ones``, ``alternating`` (sign by distance parity from the basepoint),
    ``sublattice:k`` (unit mass where the basepoint distance, or for lattices
    every coordinate, is divisible by ``k``) and ``delta`` (unit mass at the
    basepoint).
    """
    interior = w.interior
    c = np.zeros(w.n_vertices)
    base = w.index(w.spec.root()) if w.spec is not None else 0
    if rule == "all-ones":
        c[interior] = 1.0
    elif rule == "alternating":
        d = w.distances_from(base)
        c[interior] = np.where(d[interior] % 2 == 0, 1.0, -1.0)
    elif rule.startswith("sublattice:"):
        try:
            k = int(rule.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"demand: bad sublattice index in {rule!r}") from None
        if k < 1:
            raise ValueError("demand: sublattice index must be >= 1")
        if w.spec is not None and w.spec.family == "lattice":
            on = np.array([all(x % k == 0 for x in lab) for lab in w.labels])
        else:
            on = w.distances_from(base) % k == 0
        c[interior & on] = 1.0
    elif rule == "delta":
        if not interior[base]:
            raise ValueError("demand: basepoint is not interior")
        c[base] = 1.0
    else:
        raise ValueError(f"demand: unknown demand family {rule!r}")
    return Chain0(w, c)


# window-family decision -----------------------------------------------------

@dataclass(frozen=True)
class DecideConfig:
    slope_threshold: float = 0.5
    r2_threshold: float = 0.9
    stability: float = 0.10


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    r2: float

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2}


def loglog_fit(xs: Sequence[float], ys: Sequence[float]) -> GrowthFit:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(((ly - pred) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return GrowthFit(float(slope), float(intercept), r2)


@dataclass(frozen=True, eq=False)
class Verdict:
    status: str  # "Vanishes" | "Obstructed" | "Undetermined"
    sizes: tuple[int, ...]
    c_star: tuple[float, ...]
    c_sup: float
    fit: GrowthFit | None = None
    witness: Obstruction | None = None
    low_confidence: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "status": self.status,
            "sizes": list(self.sizes),
            "c_star": list(self.c_star),
            "c_sup": self.c_sup,
            "low_confidence": self.low_confidence,
            "fit": self.fit.to_dict() if self.fit else None,
            "witness": self.witness.to_dict() if self.witness else None,
            "diagnostics": self.diagnostics,
        }
        return d


def _solve_size(args):
    spec, rule, reach, size = args
    w = build_window(spec, size)
    res = min_capacity(FlowProblem(w, make_demand(w, rule), reach))
    return {
        "size": size,
        "c_star": res.c_star,
        "iterations": res.iterations,
        "n_vertices": w.n_vertices,
        "n_interior": int(w.interior.sum()),
        "argmax_region_size": len(res.region) if res.region is not None else 0,
        "flow_throughput": throughput(res.flow),
        "max_reach_degree": int(np.bincount(w.pairs_within(reach).ravel(),
                                            minlength=w.n_vertices).max()) if w.n_vertices > 1 else 0,
    }


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("COARSEHOM_THREADS", "1")))
    except ValueError:
        return 1


def decide(spec: SpaceSpec, demand_family: str, reach: int, sizes: Sequence[int],
           config: DecideConfig = DecideConfig()) -> Verdict:
    """Bounded vs growing C* across a family of windows."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("sizes: at least two window sizes are required")
    jobs = [(spec, demand_family, reach, s) for s in sizes]
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_solve_size, jobs))
    else:
        rows = [_solve_size(j) for j in jobs]
    rows.sort(key=lambda r: r["size"])
    ns = tuple(r["size"] for r in rows)
    cs = tuple(r["c_star"] for r in rows)
    diag = {"per_size": rows, "reach": reach, "demand": demand_family,
            "thresholds": {"slope": config.slope_threshold, "r2": config.r2_threshold,
                           "stability": config.stability}}
    c_sup = max(cs)
    if c_sup == 0:
        return Verdict("Vanishes", ns, cs, 0.0, diagnostics=diag)

    fit = None
    if len(ns) >= 3 and min(cs) > 0 and min(ns) > 0:
        trial = loglog_fit(ns, cs)
        # three sizes may decide growth, but the fit is only reported from four on
        if len(ns) >= 4:
            fit = trial
        else:
            diag["provisional_fit"] = trial.to_dict()
        if trial.slope > config.slope_threshold and trial.r2 >= config.r2_threshold:
            witness = _growth_witness(spec, demand_family, reach, ns, cs)
            return Verdict("Obstructed", ns, cs, c_sup, fit, witness, diagnostics=diag)

    top = cs[len(cs) // 2:]
    if max(top) - min(top) <= config.stability * max(top):
        return Verdict("Vanishes", ns, cs, c_sup, fit, diagnostics=diag)
    steps = np.diff(cs)
    scale = CAPACITY_TOL * c_sup
    if np.any(steps > scale) and np.any(steps < -scale):
        return Verdict("Undetermined", ns, cs, c_sup, fit, diagnostics=diag)
    return Verdict("Vanishes", ns, cs, c_sup, fit, low_confidence=True, diagnostics=diag)


def _growth_witness(spec, rule, reach, ns, cs) -> Obstruction | None:
    """Obstruction on the largest window at the capacity the smallest one needed."""
    cap = cs[0] if cs[0] > 0 else 1.0
    if cap >= cs[-1]:
        return None
    w = build_window(spec, ns[-1])
    out = solve_feasibility(FlowProblem(w, make_demand(w, rule), reach, cap))
    return out if isinstance(out, Obstruction) else None


# positive scalar curvature verdict ------------------------------------------

class PSC(str, enum.Enum):
    ADMITS_UPSC = "AdmitsUPSC"
    NO_NONNEGATIVE_SCALAR_CURVATURE = "NoNonnegativeScalarCurvature"
    ADMITS_UPSC_BY_SURGERY = "AdmitsUPSC_by_surgery"
    UNDETERMINED = "Undetermined"


def psc_verdict(decision: Verdict, ahat_n: int) -> PSC:
    """Scalar-curvature outcome for the connected sum along the decided class.

    With vanishing A-hat genus of the summand the class is irrelevant;
    otherwise vanishing of the class decides.
    """
    if int(ahat_n) != ahat_n:
        raise ValueError("ahat: must be an integer")
    if ahat_n == 0:
        return PSC.ADMITS_UPSC_BY_SURGERY
    if decision.status == "Vanishes":
        return PSC.ADMITS_UPSC
    if decision.status == "Obstructed":
        return PSC.NO_NONNEGATIVE_SCALAR_CURVATURE
    return PSC.UNDETERMINED
