"""End-to-end acceptance checks, shared by ``check-all`` and the test suite.

Every check returns a :class:`CriterionResult`; thresholds are module
constants so the CLI and pytest run the same numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .amenability import cross_check_equivalence
from .decider import (
    PSC,
    FlowProblem,
    Obstruction,
    TailSet,
    decide,
    exhaustive_c_star,
    make_demand,
    min_capacity,
    psc_verdict,
    solve_feasibility,
)
from .chains import Chain0
from .space import SpaceSpec, build_window
from .spectral import (
    MeshSpec,
    closed_form_spectrum,
    laplacian_spectrum,
    refinement_band,
    verify_eigen_covering_bound,
    weyl_check,
)

Z2_SIZES = (4, 8, 16, 32)
Z2_MIN_SLOPE = 0.7
Z2_MIN_R2 = 0.9
TREE_DEPTHS = (3, 4, 5, 6, 7, 8)
TREE_MAX_C = 3.0
DUALITY_INSTANCES = 20
DUALITY_TOL = 1e-6
MAX_RANDOM_INTERIOR = 12
FOELNER_EPSILON = 0.05
TREE_FLOOR = 0.2
SPECTRUM_RTOL = 1e-9
WEYL_SLOPE_TOL = 0.1
COLLAPSE_TOL = 0.10
K_BAND = 2.0

TWO_PI = 2 * math.pi

PROFILES = {
    "quick": {
        "z2_sizes": Z2_SIZES,
        "tree_depths": TREE_DEPTHS,
        "line_sizes": (8, 16, 32, 64),
        "circle_n": (64, 128, 256),
        "torus_n": (16, 32),
        "circle_cover_n": (64, 128, 256),
        "torus_cover_n": (16, 32, 64),
    },
    "full": {
        "z2_sizes": Z2_SIZES + (48,),
        "tree_depths": TREE_DEPTHS + (9, 10),
        "line_sizes": (8, 16, 32, 64, 128),
        "circle_n": (64, 128, 256, 512),
        "torus_n": (16, 32, 48),
        "circle_cover_n": (64, 128, 256, 512),
        "torus_cover_n": (16, 32, 64),
    },
}


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.id}: {self.name}"

    def to_dict(self):
        return {"id": self.id, "name": self.name, "passed": self.passed, "details": self.details}


def random_instance(rng: np.random.Generator):
    """Small connected custom window with random +-1 demand and reach."""
    n_int = int(rng.integers(5, MAX_RANDOM_INTERIOR + 1))
    n_sink = int(rng.integers(2, 5))
    n = n_int + n_sink
    edges = set()
    for v in range(1, n_int):  # random spanning tree on the interior
        u = int(rng.integers(0, v))
        edges.add((u, v))
    for _ in range(int(rng.integers(0, n_int))):
        u, v = sorted(int(x) for x in rng.choice(n_int, 2, replace=False))
        edges.add((u, v))
    for s in range(n_int, n):
        for u in rng.choice(n_int, int(rng.integers(1, 3)), replace=False):
            edges.add((int(u), s))
    spec = SpaceSpec.custom(list(range(n)), sorted(edges), sinks=list(range(n_int, n)))
    w = build_window(spec, None)
    coeffs = np.zeros(n)
    coeffs[:n_int] = rng.choice([-1.0, 1.0], n_int)
    reach = int(rng.integers(1, 3))
    return w, Chain0(w, coeffs), reach


class AcceptanceRun:
    """Runs the criteria once, sharing expensive intermediate results."""

    def __init__(self, profile: str = "quick", seed: int = 0):
        if profile not in PROFILES:
            raise ValueError(f"profile: unknown budget profile {profile!r}")
        self.profile = profile
        self.p = PROFILES[profile]
        self.seed = seed
        self._memo: dict = {}

    def _once(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def z2_verdict(self):
        return self._once("z2", lambda: decide(SpaceSpec.lattice(2), "all-ones", 1, self.p["z2_sizes"]))

    def tree_verdict(self):
        return self._once("tree", lambda: decide(SpaceSpec.tree(3), "all-ones", 1, self.p["tree_depths"]))

    def random_instances(self):
        def build():
            rng = np.random.default_rng(self.seed)
            return [random_instance(rng) for _ in range(DUALITY_INSTANCES)]
        return self._once("random", build)

    # criteria -------------------------------------------------------------
    def c1_z2_obstruction(self) -> CriterionResult:
        v = self.z2_verdict()
        ok = (v.status == "Obstructed" and v.fit is not None
              and v.fit.slope >= Z2_MIN_SLOPE and v.fit.r2 >= Z2_MIN_R2)
        return CriterionResult(1, "Z^2 all-ones class is obstructed (C* grows)", ok, {
            "status": v.status, "sizes": list(v.sizes), "c_star": list(v.c_star),
            "slope": v.fit.slope if v.fit else None, "r2": v.fit.r2 if v.fit else None,
            "witness_valid": v.witness.is_valid() if v.witness else None,
        })

    def c2_tree_vanishing(self) -> CriterionResult:
        v = self.tree_verdict()
        ok = v.status == "Vanishes" and all(c <= TREE_MAX_C + DUALITY_TOL for c in v.c_star)
        return CriterionResult(2, "3-regular tree all-ones class vanishes (C* <= 3)", ok, {
            "status": v.status, "depths": list(v.sizes), "c_star": list(v.c_star),
            "low_confidence": v.low_confidence})

    def c3_duality(self) -> CriterionResult:
        gaps, bad_certs = [], 0
        for w, c, reach in self.random_instances():
            res = min_capacity(FlowProblem(w, c, reach))
            brute, _ = exhaustive_c_star(w, c, reach)
            gaps.append(abs(res.c_star - brute))
            feasible = solve_feasibility(FlowProblem(w, c, reach, res.c_star * (1 + 1e-9)))
            if not isinstance(feasible, TailSet) or not feasible.is_valid():
                bad_certs += 1
            if res.region is not None:
                below = solve_feasibility(FlowProblem(w, c, reach, res.c_star * (1 - 1e-6)))
                if not isinstance(below, Obstruction) or not below.is_valid():
                    bad_certs += 1
        ok = max(gaps) <= DUALITY_TOL and bad_certs == 0
        return CriterionResult(3, "min-cut duality has zero gap against exhaustive regions", ok, {
            "instances": len(gaps), "max_gap": max(gaps), "invalid_certificates": bad_certs})

    def c4_exclusivity(self) -> CriterionResult:
        problems = []
        cases = []
        for spec, sizes in ((SpaceSpec.lattice(2), self.p["z2_sizes"]),
                            (SpaceSpec.tree(3), self.p["tree_depths"])):
            for n in sizes:
                w = build_window(spec, n)
                cases.append((f"{spec.family}:{n}", w, make_demand(w, "all-ones"), 1))
        for k, (w, c, reach) in enumerate(self.random_instances()):
            cases.append((f"random:{k}", w, c, reach))
        for name, w, c, reach in cases:
            c_star = min_capacity(FlowProblem(w, c, reach)).c_star
            lo = solve_feasibility(FlowProblem(w, c, reach, 0.9 * c_star))
            hi = solve_feasibility(FlowProblem(w, c, reach, 1.1 * c_star))
            if not (isinstance(lo, Obstruction) and lo.is_valid()):
                problems.append(f"{name}: no valid obstruction at 0.9 C*")
            if not (isinstance(hi, TailSet) and hi.is_valid()):
                problems.append(f"{name}: no valid tails at 1.1 C*")
        return CriterionResult(4, "certificates switch from obstruction to tails across C*",
                               not problems, {"cases": len(cases), "problems": problems})

    def c5_psc(self) -> CriterionResult:
        got = {
            "lattice2_ahat1": psc_verdict(self.z2_verdict(), 1),
            "tree3_ahat1": psc_verdict(self.tree_verdict(), 1),
            "lattice2_ahat0": psc_verdict(self.z2_verdict(), 0),
            "tree3_ahat0": psc_verdict(self.tree_verdict(), 0),
        }
        want = {
            "lattice2_ahat1": PSC.NO_NONNEGATIVE_SCALAR_CURVATURE,
            "tree3_ahat1": PSC.ADMITS_UPSC,
            "lattice2_ahat0": PSC.ADMITS_UPSC_BY_SURGERY,
            "tree3_ahat0": PSC.ADMITS_UPSC_BY_SURGERY,
        }
        return CriterionResult(5, "scalar-curvature trichotomy", got == want,
                               {k: v.value for k, v in got.items()})

    def c6_foelner(self) -> CriterionResult:
        cases = {
            "lattice1": (SpaceSpec.lattice(1), self.p["line_sizes"]),
            "lattice2": (SpaceSpec.lattice(2), self.p["z2_sizes"]),
            "tree3": (SpaceSpec.tree(3), self.p["tree_depths"]),
        }
        details, ok = {}, True
        for name, (spec, sizes) in cases.items():
            rep = cross_check_equivalence(spec, 1, sizes, epsilon=FOELNER_EPSILON)
            details[name] = {"agreement": rep.agreement, "foelner": rep.foelner.verdict,
                             "floor": rep.foelner.floor, "decision": rep.decision.status,
                             "message": rep.message}
            ok &= rep.agreement
        ok &= details["lattice2"]["foelner"] == "RegularSequenceFound"
        ok &= details["lattice2"]["floor"] < FOELNER_EPSILON
        ok &= details["tree3"]["floor"] > TREE_FLOOR
        return CriterionResult(6, "Foelner evidence agrees with the decider", bool(ok), details)

    def c7_closed_forms(self) -> CriterionResult:
        errs = {}
        meshes = [MeshSpec.circle(TWO_PI, n) for n in self.p["circle_n"]]
        meshes += [MeshSpec.torus((TWO_PI, TWO_PI), (n, n)) for n in self.p["torus_n"]]
        for m in meshes:
            ev = laplacian_spectrum(m).eigenvalues
            cf = closed_form_spectrum(m)
            errs[f"{m.manifold}:{'x'.join(map(str, m.subdivisions))}"] = \
                float(np.abs(ev - cf).max() / cf.max())
        return CriterionResult(7, "mesh spectra match circulant closed forms",
                               max(errs.values()) <= SPECTRUM_RTOL, {"relative_errors": errs})

    def c8_weyl(self) -> CriterionResult:
        h = TWO_PI / 64
        torus = weyl_check([MeshSpec.torus((TWO_PI, TWO_PI), (64, 64)),
                            MeshSpec.torus((TWO_PI, 2 * TWO_PI), (64, 128))],
                           np.linspace(4.0, 25.0, 85))
        circle = weyl_check([MeshSpec.circle(k * TWO_PI, round(k * TWO_PI / h)) for k in (1, 2, 4)],
                            np.linspace(1.0, 25.0, 97))
        slope_ok = all(abs(s - 1.0) <= WEYL_SLOPE_TOL for s in torus.slopes)
        ok = slope_ok and circle.collapse_spread <= COLLAPSE_TOL and torus.holds() and circle.holds()
        return CriterionResult(8, "Weyl counting: slope n/2, volume collapse, two-branch bound", ok, {
            "torus_slopes": list(torus.slopes), "circle_collapse_spread": circle.collapse_spread,
            "circle_pointwise_spread": circle.pointwise_spread,
            "torus_C": torus.C, "circle_C": circle.C, "torus_lambda0": torus.lambda0,
            "circle_lambda0": circle.lambda0,
            "C_per_volume": {"circle": list(circle.C_per_mesh), "torus": list(torus.C_per_mesh)},
            "bound_holds": {"torus": torus.holds(), "circle": circle.holds()}})

    def c9_covering(self) -> CriterionResult:
        circle_eps = [math.pi / 8, math.pi / 4, math.pi / 2, math.pi]
        torus_eps = [math.pi / 4, math.pi / 3, math.pi / 2, math.pi]
        circles = [verify_eigen_covering_bound(MeshSpec.circle(TWO_PI, n), circle_eps)
                   for n in self.p["circle_cover_n"]]
        tori = [verify_eigen_covering_bound(MeshSpec.torus((TWO_PI, TWO_PI), (n, n)), torus_eps)
                for n in self.p["torus_cover_n"]]
        band_c, band_t = refinement_band(circles), refinement_band(tori)
        sandwich = all(r.sandwich_holds() for r in circles + tori)
        positive = all(r.K_min > 0 for r in circles + tori)
        ok = (max(band_c.values()) < K_BAND and max(band_t.values()) < K_BAND
              and sandwich and positive)
        return CriterionResult(9, "lambda_V(eps) eps^2 stable under refinement; packing >= covering", ok, {
            "circle_band": {f"{k:.6f}": v for k, v in band_c.items()},
            "torus_band": {f"{k:.6f}": v for k, v in band_t.items()},
            "sandwich": sandwich,
            "circle_K": [[r.K for r in rep.rows] for rep in circles],
            "torus_K": [[r.K for r in rep.rows] for rep in tori]})

    def criteria(self):
        return [self.c1_z2_obstruction, self.c2_tree_vanishing, self.c3_duality,
                self.c4_exclusivity, self.c5_psc, self.c6_foelner, self.c7_closed_forms,
                self.c8_weyl, self.c9_covering]


def check_all(profile: str = "quick", seed: int = 0, echo=None) -> dict:
    """Run every criterion; ``echo`` receives one pass/fail line per criterion."""
    run = AcceptanceRun(profile, seed)
    results = []
    for fn in run.criteria():
        res = fn()
        results.append(res)
        if echo is not None:
            echo(res.line())
    return {"profile": profile, "seed": seed,
            "passed": all(r.passed for r in results),
            "failures": [r.id for r in results if not r.passed],
            "criteria": [r.to_dict() for r in results]}
