"""Isoperimetric profiles, Foelner-set search and the amenability cross-check."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .decider import DecideConfig, Verdict, decide
from .space import (
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

SEARCH_VERTEX_BUDGET = 60_000


@dataclass(frozen=True)
class ProfileSample:
    region_id: str
    vol_R: float
    vol_boundary: float
    ratio: float
    error: str | None = None

    def to_dict(self):
        return {"region_id": self.region_id, "vol_R": self.vol_R,
                "vol_dR": self.vol_boundary, "ratio": self.ratio, "error": self.error}


@dataclass(frozen=True)
class IsoperimetricProfile:
    r: int
    samples: tuple[ProfileSample, ...]

    def ok(self) -> list[ProfileSample]:
        return [s for s in self.samples if s.error is None]

    def to_csv_rows(self) -> list[list]:
        return [[s.region_id, s.vol_R, s.vol_boundary, s.ratio] for s in self.ok()]

    def to_dict(self):
        return {"r": self.r, "samples": [s.to_dict() for s in self.samples]}


def collar_ratio(w: Window, R: Region, r: int) -> tuple[float, float, float]:
    """(vol R, vol of the r-collar, ratio) for a region of a window."""
    vol = region_volume(w, R)
    if vol <= 0:
        raise SpaceError("region has no volume")
    dvol = region_volume(w, r_boundary(w, R, r))
    return vol, dvol, dvol / vol


def _box(w: Window, half_width: int) -> Region:
    return Region.of(w, [i for i, lab in enumerate(w.labels)
                         if max(abs(x) for x in lab) <= half_width])


def isoperimetric_profile(spec: SpaceSpec, r: int, family: str = "balls",
                          sizes: Sequence[int] = tuple(range(1, 11)),
                          regions: Iterable[Iterable] | None = None,
                          window_radius: int | None = None,
                          vertex_budget: int = SEARCH_VERTEX_BUDGET) -> IsoperimetricProfile:
    """Sample ``vol(collar_r R) / vol(R)`` over a family of regions.

    ``family`` is ``balls`` (about the basepoint, radii ``sizes``), ``boxes``
    (lattices only, half-widths ``sizes``) or ``custom`` (``regions`` given as
    lists of vertex labels on a window of ``window_radius``).
    """
    if r < 1:
        raise SpaceError("r: must be >= 1")
    samples = []
    if family == "custom":
        if regions is None or window_radius is None:
            raise SpaceError("custom family needs regions and window_radius")
        w = build_window(spec, window_radius, vertex_budget)
        for k, labels in enumerate(regions):
            try:
                R = Region.of(w, [w.index(lab) for lab in labels])
                samples.append(ProfileSample(f"custom[{k}]", *collar_ratio(w, R, r)))
            except SpaceError as exc:
                samples.append(ProfileSample(f"custom[{k}]", np.nan, np.nan, np.nan, str(exc)))
    elif family in ("balls", "boxes"):
        if family == "boxes" and spec.family != "lattice":
            raise SpaceError("boxes: only available for lattices")
        sizes = sorted(int(s) for s in sizes)
        if not sizes:
            raise SpaceError("sizes: empty region family")
        extent = (lambda a: a) if family == "balls" else (lambda a: spec.n * a)
        w = None
        for a in sizes:
            need = extent(a) + r + 1
            rid = f"{family[:-1] if family == 'balls' else 'box'}({a})"
            try:
                if w is None or w.radius < need:
                    w = build_window(spec, need, vertex_budget)
                base = w.index(spec.root())
                R = ball(w, base, a) if family == "balls" else _box(w, a)
                samples.append(ProfileSample(rid, *collar_ratio(w, R, r)))
            except WindowBudgetError as exc:
                samples.append(ProfileSample(rid, np.nan, np.nan, np.nan, str(exc)))
    else:
        raise SpaceError(f"family: unknown region family {family!r}")
    if not samples:
        raise SpaceError("region family is empty")
    return IsoperimetricProfile(r, tuple(samples))


@dataclass(frozen=True, eq=False)
class FoelnerReport:
    verdict: str  # "RegularSequenceFound" | "NoSequenceBelow"
    epsilon: float
    r: int
    regions: tuple[str, ...]
    ratios: tuple[float, ...]
    floor: float
    regions_tested: int
    method: str
    best_region: Region | None = field(default=None, repr=False)

    @property
    def found(self) -> bool:
        return self.verdict == "RegularSequenceFound"

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "epsilon": self.epsilon,
            "r": self.r,
            "regions": list(self.regions),
            "ratios": list(self.ratios),
            "floor": self.floor,
            "regions_tested": self.regions_tested,
            "method": self.method,
            "evidence_only": not self.found,
        }


def foelner_search(spec: SpaceSpec, r: int, epsilon: float, budget: int = 10_000,
                   vertex_budget: int = SEARCH_VERTEX_BUDGET, patience: int = 5,
                   max_peel: int = 150) -> FoelnerReport:
    """Look for a region whose r-collar is below ``epsilon`` of its volume.

    Metric balls about the basepoint come first. Ball growth stops once the
    best ratio has improved by less than 1% over ``patience`` radii or the
    window budget is hit; the best ball is then peeled greedily. Failure is
    evidence of non-amenability, never a proof.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon: must lie in (0, 1)")
    if r < 1 or budget < 1:
        raise ValueError("r and budget must be positive")
    tested = 0
    seq_ids: list[str] = []
    seq_ratios: list[float] = []
    history: list[float] = []
    best = (np.inf, None, None, None)  # ratio, radius, window, region
    w = None
    radius = 0
    while tested < budget:
        radius += 1
        need = radius + r + 1
        if w is None or w.radius < need:
            try:
                w = build_window(spec, need + max(2, need // 2), vertex_budget)
            except WindowBudgetError:
                try:
                    w = build_window(spec, need, vertex_budget)
                except WindowBudgetError:
                    break
        R = ball(w, w.index(spec.root()), radius)
        _, _, ratio = collar_ratio(w, R, r)
        tested += 1
        history.append(ratio)
        if ratio < best[0]:
            best = (ratio, radius, w, R)
            if not seq_ratios or ratio < seq_ratios[-1]:
                seq_ids.append(f"ball({radius})")
                seq_ratios.append(ratio)
        if ratio < epsilon:
            return FoelnerReport("RegularSequenceFound", epsilon, r, tuple(seq_ids),
                                 tuple(seq_ratios), ratio, tested, "balls", R)
        if len(history) > patience:
            past = min(history[:-patience])
            if best[0] > past * 0.99:
                break

    floor, _, w, R = best
    method = "balls"
    if w is not None and tested < budget and len(R) > 1:
        method = "balls+peeling"
        peeled_floor, peeled_region, used = _peel(w, R, r, min(max_peel, budget - tested))
        tested += used
        if peeled_floor < floor:
            floor, R = peeled_floor, peeled_region
            if peeled_floor < seq_ratios[-1]:
                seq_ids.append(f"peeled({len(R)})")
                seq_ratios.append(peeled_floor)
            if peeled_floor < epsilon:
                return FoelnerReport("RegularSequenceFound", epsilon, r, tuple(seq_ids),
                                     tuple(seq_ratios), floor, tested, method, R)
    return FoelnerReport("NoSequenceBelow", epsilon, r, tuple(seq_ids), tuple(seq_ratios),
                         float(floor), tested, method, R)


def _peel(w: Window, R: Region, r: int, steps: int):
    """Greedily drop the member with the most outside collar points nearby."""
    inside = R.mask(w.n_vertices)
    collar = r_boundary(w, R, r).mask(w.n_vertices)

    def exposure(v):
        return sum(1 for u in w._local_ball(v, r) if collar[u] and not inside[u])

    heap = [(-exposure(v), v) for v in np.flatnonzero(collar & inside)]
    heapq.heapify(heap)
    best_ratio = collar_ratio(w, R, r)[2]
    best_region = R
    size = len(R)
    used = 0
    while used < steps and heap and size > 1:
        neg, v = heapq.heappop(heap)
        if not inside[v] or not collar[v] or -neg != exposure(v):
            if inside[v] and collar[v]:
                heapq.heappush(heap, (-exposure(v), v))
            continue
        inside[v] = False
        size -= 1
        region = Region.of(w, inside)
        _, _, ratio = collar_ratio(w, region, r)
        used += 1
        collar = r_boundary(w, region, r).mask(w.n_vertices)
        for u in w._local_ball(v, 2 * r):
            if inside[u] and collar[u]:
                heapq.heappush(heap, (-exposure(u), u))
        if ratio < best_ratio:
            best_ratio, best_region = ratio, region
    return best_ratio, best_region, used


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    space: dict
    foelner: FoelnerReport
    decision: Verdict
    agreement: bool
    message: str

    def to_dict(self):
        return {"space": self.space, "foelner": self.foelner.to_dict(),
                "decision": self.decision.to_dict(), "agreement": self.agreement,
                "message": self.message}


def cross_check_equivalence(spec: SpaceSpec, r: int, sizes: Sequence[int],
                            epsilon: float = 0.05, budget: int = 10_000,
                            config: DecideConfig = DecideConfig()) -> EquivalenceReport:
    """Compare Foelner evidence with the decider's verdict on all-ones demand.

    Amenable spaces must not have a vanishing fundamental class and
    non-amenable ones must; a mismatch points at a bug.
    """
    fol = foelner_search(spec, r, epsilon, budget)
    verdict = decide(spec, "all-ones", r, sizes, config)
    if fol.found:
        ok = verdict.status in ("Obstructed", "Undetermined")
        msg = ("amenable evidence with non-vanishing class" if ok
               else "DISCREPANCY: Foelner sequence found but the class vanishes")
    else:
        ok = verdict.status == "Vanishes"
        msg = ("no Foelner sequence and the class vanishes" if ok
               else f"DISCREPANCY: no Foelner sequence but verdict is {verdict.status}")
    return EquivalenceReport(spec.to_dict(), fol, verdict, ok, msg)
