"""Laplacian spectra of discretized circles, flat tori and intervals.

Eigenvalues are those of the scaled graph Laplacian (graph Laplacian divided
by the squared mesh spacing, per axis), so they approximate the continuum
Laplacian. Index convention: eigenvalues sorted ascending with multiplicity,
``lambda_k`` for ``k >= 1`` is ``eigenvalues[k - 1]`` (``lambda_1 = 0``).
Reading "lambda at index V" therefore means ``eigenvalues[V]``, the
``(V+1)``-th eigenvalue.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 4096
ITERATIVE_FROM = 1024
VALIDITY = 0.25  # usable lambda range is lambda <= VALIDITY / h**2
DIST_TOL = 1e-9


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeshSpec:
    """``circle`` (one side = length), ``flat_torus`` (one side per dimension)
    or ``interval`` (Neumann ends); ``subdivisions`` per dimension."""

    manifold: str
    sides: tuple[float, ...]
    subdivisions: tuple[int, ...]

    def __post_init__(self):
        if self.manifold not in ("circle", "flat_torus", "interval"):
            raise ValueError(f"manifold: unknown manifold {self.manifold!r}")
        if len(self.sides) != len(self.subdivisions) or not self.sides:
            raise ValueError("sides and subdivisions must have the same nonzero length")
        if self.manifold in ("circle", "interval") and len(self.sides) != 1:
            raise ValueError(f"{self.manifold}: one-dimensional")
        if any(n < 4 for n in self.subdivisions):
            raise ValueError("subdivisions: must be >= 4")
        if any(not s > 0 for s in self.sides):
            raise ValueError("sides: must be positive")

    @classmethod
    def circle(cls, length: float, n: int) -> "MeshSpec":
        return cls("circle", (float(length),), (int(n),))

    @classmethod
    def torus(cls, sides: Sequence[float], subdivisions: Sequence[int]) -> "MeshSpec":
        return cls("flat_torus", tuple(float(s) for s in sides), tuple(int(n) for n in subdivisions))

    @classmethod
    def interval(cls, length: float, n: int) -> "MeshSpec":
        return cls("interval", (float(length),), (int(n),))

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(s / n for s, n in zip(self.sides, self.subdivisions))

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def periodic(self) -> bool:
        return self.manifold != "interval"

    @property
    def axis_points(self) -> tuple[int, ...]:
        return tuple(n if self.periodic else n + 1 for n in self.subdivisions)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.axis_points))

    @property
    def diameter(self) -> float:
        if self.periodic:
            return math.sqrt(sum((s / 2) ** 2 for s in self.sides))
        return self.sides[0]

    def to_dict(self):
        return {"manifold": self.manifold, "sides": list(self.sides),
                "subdivisions": list(self.subdivisions)}


def _axis_laplacian(n_points: int, h: float, periodic: bool) -> sp.csr_matrix:
    main = np.full(n_points, 2.0)
    if not periodic:
        main[0] = main[-1] = 1.0
    off = -np.ones(n_points - 1)
    L = sp.diags([main, off, off], [0, -1, 1], format="lil")
    if periodic:
        L[0, n_points - 1] = -1.0
        L[n_points - 1, 0] = -1.0
    return (L.tocsr() / h**2)


def scaled_laplacian(m: MeshSpec) -> sp.csr_matrix:
    """Kronecker sum of per-axis scaled path/cycle Laplacians."""
    mats = [_axis_laplacian(p, h, m.periodic) for p, h in zip(m.axis_points, m.spacing)]
    L = mats[0]
    for M in mats[1:]:
        L = sp.kronsum(M, L, format="csr")  # last axis varies fastest
    return L.tocsr()


def closed_form_spectrum(m: MeshSpec) -> np.ndarray:
    """Exact eigenvalues of the scaled Laplacian (circulant / path formulas)."""
    axes = []
    for p, h in zip(m.axis_points, m.spacing):
        j = np.arange(p)
        if m.periodic:
            axes.append(4 * np.sin(np.pi * j / p) ** 2 / h**2)
        else:
            axes.append(4 * np.sin(np.pi * j / (2 * p)) ** 2 / h**2)
    total = axes[0]
    for a in axes[1:]:
        total = np.add.outer(total, a).ravel()
    return np.sort(total)


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    mesh: MeshSpec
    eigenvalues: np.ndarray
    cutoff: float  # counting is valid strictly below this; inf when complete
    method: str

    @property
    def vol(self) -> float:
        return self.mesh.volume

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def complete(self) -> bool:
        return math.isinf(self.cutoff)

    def to_dict(self):
        return {"mesh": self.mesh.to_dict(), "method": self.method,
                "cutoff": None if self.complete else self.cutoff,
                "vol": self.vol, "dim": self.dim,
                "eigenvalues": [float(x) for x in self.eigenvalues]}


def laplacian_spectrum(m: MeshSpec, cutoff: float | None = None, n_eigs: int | None = None,
                       dense_limit: int = DENSE_LIMIT,
                       iterative_from: int = ITERATIVE_FROM) -> SpectrumReport:
    """Eigenvalues of the scaled Laplacian.

    Without ``cutoff``/``n_eigs`` the whole spectrum is computed densely (up
    to ``dense_limit`` vertices). With either one, meshes above
    ``iterative_from`` vertices use shift-invert Lanczos for the bottom of the
    spectrum, growing the number of eigenpairs until ``cutoff`` is passed and
    ``n_eigs`` are known; the reported cutoff is then the largest computed
    eigenvalue, and counting at or above it is refused.
    """
    L = scaled_laplacian(m)
    N = L.shape[0]
    full = cutoff is None and n_eigs is None
    if full and N > dense_limit:
        raise SpectralError(f"{N} vertices exceeds the dense limit {dense_limit}; pass cutoff or n_eigs")
    if full or N <= iterative_from:
        ev = scipy.linalg.eigvalsh(L.toarray())
        return SpectrumReport(m, _clean(ev), math.inf, "dense")

    k = n_eigs if n_eigs is not None else _weyl_estimate(m, cutoff)
    while True:
        k = min(k, N - 2)
        try:
            ev = spla.eigsh(L, k=k, sigma=-1.0, which="LM", return_eigenvectors=False,
                            v0=np.ones(N) / math.sqrt(N), tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            raise SpectralError(f"eigensolver did not converge for k={k}") from exc
        ev = _clean(np.sort(ev))
        enough = (n_eigs is None or len(ev) >= n_eigs) and (cutoff is None or ev[-1] > cutoff)
        if enough or k >= N - 2:
            if cutoff is not None and not ev[-1] > cutoff:
                raise SpectralError("mesh too small for the iterative path at this cutoff")
            return SpectrumReport(m, ev, float(ev[-1]), "shift-invert")
        k = int(k * 1.5) + 8


def _clean(ev: np.ndarray) -> np.ndarray:
    ev = np.sort(np.asarray(ev, float))
    tiny = 1e-9 * max(1.0, float(np.abs(ev).max()))
    ev[np.abs(ev) < tiny] = 0.0
    if ev[0] < 0:
        raise SpectralError(f"negative eigenvalue {ev[0]:.3g}")
    ev.setflags(write=False)
    return ev


def _weyl_estimate(m: MeshSpec, lam: float) -> int:
    n = m.dim
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    est = ball * m.volume * lam ** (n / 2) / (2 * math.pi) ** n
    return int(1.3 * est + 4 * n + 10)


def counting_function(rep: SpectrumReport, lam: float) -> int:
    """Number of eigenvalues <= ``lam`` counted with multiplicity."""
    if not rep.complete and lam >= rep.cutoff:
        raise SpectralError(f"lambda={lam} is not below the computed cutoff {rep.cutoff}")
    if lam < 0:
        return 0
    ev = rep.eigenvalues
    slack = 1e-9 * max(1.0, abs(lam))
    return int(np.searchsorted(ev, lam + slack, side="right"))


# Weyl law ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeylReport:
    lambdas: np.ndarray
    volumes: tuple[float, ...]
    dim: int
    counts: np.ndarray  # (meshes, lambdas)
    slopes: tuple[float, ...]
    collapse_spread: float
    pointwise_spread: float
    lambda0: float
    C: float
    C_per_mesh: tuple[float, ...]
    meshes: tuple[MeshSpec, ...] = field(repr=False, default=())

    def bound(self, lam: float) -> float:
        """Two-branch counting bound per unit volume."""
        return self.C * max(lam, self.lambda0) ** (self.dim / 2)

    def holds(self) -> bool:
        rhs = np.array([[self.bound(l) * v for l in self.lambdas] for v in self.volumes])
        return bool(np.all(self.counts <= rhs * (1 + 1e-12)))

    def csv_rows(self) -> list[list]:
        rows = []
        for i, v in enumerate(self.volumes):
            for j, lam in enumerate(self.lambdas):
                rows.append([float(lam), int(self.counts[i, j]), v, self.dim, self.bound(lam) * v])
        return rows

    def to_dict(self):
        return {"lambdas": [float(x) for x in self.lambdas], "volumes": list(self.volumes),
                "dim": self.dim, "counts": self.counts.tolist(), "slopes": list(self.slopes),
                "collapse_spread": self.collapse_spread, "pointwise_spread": self.pointwise_spread,
                "lambda0": self.lambda0, "C": self.C, "C_per_mesh": list(self.C_per_mesh),
                "bound_holds": self.holds()}


def weyl_check(meshes: Sequence[MeshSpec], lambda_grid: Sequence[float]) -> WeylReport:
    """Counting function of several meshes against ``C Vol lambda^(n/2)``.

    The grid is cut to the usable range of every mesh (below each computed
    cutoff and below ``VALIDITY / h**2``). Per mesh the slope of
    ``log N`` against ``log lambda`` is fitted over grid points above the
    first nonzero eigenvalue. Volume collapse compares the grid-averaged
    ``N / Vol`` between meshes (``collapse_spread``); the worst single-lambda
    spread is reported alongside. ``lambda0`` is the smallest first nonzero
    eigenvalue over the meshes and ``C`` the least constant making the
    two-branch bound hold on the grid.
    """
    meshes = list(meshes)
    if len(meshes) < 1:
        raise ValueError("meshes: need at least one mesh")
    dims = {m.dim for m in meshes}
    if len(dims) != 1:
        raise ValueError("meshes: all meshes must share a dimension")
    n = dims.pop()
    grid = np.sort(np.asarray(lambda_grid, float))
    hmax = max(max(m.spacing) for m in meshes)
    grid = grid[(grid > 0) & (grid <= VALIDITY / hmax**2)]
    reports = [laplacian_spectrum(m, cutoff=float(grid.max()) if grid.size else None) for m in meshes]
    grid = grid[np.all([grid < r.cutoff for r in reports], axis=0)] if grid.size else grid
    if not grid.size:
        raise SpectralError("lambda grid is empty after cutoff filtering")

    counts = np.array([[counting_function(r, l) for l in grid] for r in reports])
    vols = np.array([m.volume for m in meshes])
    gaps = [float(r.eigenvalues[r.eigenvalues > 0][0]) for r in reports]
    lambda0 = min(gaps)

    slopes = []
    for i, g in enumerate(gaps):
        sel = grid >= g
        if sel.sum() >= 2:
            slopes.append(float(np.polyfit(np.log(grid[sel]), np.log(counts[i, sel]), 1)[0]))
        else:
            slopes.append(float("nan"))

    density = counts / vols[:, None]
    mean_density = density.mean(axis=1)
    collapse = float((mean_density.max() - mean_density.min()) / mean_density.mean())
    pointwise = float(np.max((density.max(axis=0) - density.min(axis=0)) / density.mean(axis=0)))

    scale = np.maximum(grid, lambda0) ** (n / 2)
    per_mesh = tuple(float(np.max(density[i] / scale)) for i in range(len(meshes)))
    return WeylReport(grid, tuple(vols.tolist()), n, counts, tuple(slopes), collapse, pointwise,
                      lambda0, max(per_mesh), per_mesh, tuple(meshes))


# coverings and packings -------------------------------------------------------

def mesh_points(m: MeshSpec) -> np.ndarray:
    """Integer grid coordinates, last axis fastest (matches the Laplacian)."""
    axes = [np.arange(p) for p in m.axis_points]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def pairwise_distances(m: MeshSpec, rows: np.ndarray | None = None) -> np.ndarray:
    """Geodesic distances (wrap-around on periodic axes) between mesh points."""
    pts = mesh_points(m)
    sub = pts if rows is None else pts[rows]
    d2 = np.zeros((len(sub), len(pts)))
    for ax, (p, h) in enumerate(zip(m.axis_points, m.spacing)):
        diff = np.abs(sub[:, ax][:, None] - pts[:, ax][None, :])
        if m.periodic:
            diff = np.minimum(diff, p - diff)
        d2 += (diff * h) ** 2
    return np.sqrt(d2)


def _within(m: MeshSpec, radius: float, strict: bool = False) -> np.ndarray:
    N = m.n_vertices
    out = np.zeros((N, N), dtype=bool)
    step = max(1, 2_000_000 // N)
    for start in range(0, N, step):
        d = pairwise_distances(m, np.arange(start, min(N, start + step)))
        out[start:start + step] = d < radius - DIST_TOL if strict else d <= radius + DIST_TOL
    return out


def _check_epsilon(m: MeshSpec, epsilon: float) -> None:
    if epsilon < 2 * max(m.spacing) - DIST_TOL:
        raise ValueError(f"epsilon={epsilon} is below twice the mesh spacing {max(m.spacing)}")


def covering_number(m: MeshSpec, epsilon: float) -> int:
    """Greedy set-cover upper bound for the number of closed epsilon-balls
    (centered at mesh points) needed to cover the mesh."""
    _check_epsilon(m, epsilon)
    if epsilon >= m.diameter:
        return 1
    cover = _within(m, epsilon)
    uncovered = np.ones(len(cover), dtype=bool)
    counts = cover.sum(axis=1)
    used = 0
    while uncovered.any():
        c = int(np.argmax(counts))
        fresh = cover[c] & uncovered
        uncovered &= ~fresh
        counts = counts - cover[fresh].sum(axis=0)
        used += 1
    return used


def packing_centers(m: MeshSpec, epsilon: float) -> np.ndarray:
    """Greedy maximal family of mesh points pairwise at distance >= epsilon
    (their open epsilon/2-balls are disjoint)."""
    _check_epsilon(m, epsilon)
    N = m.n_vertices
    blocked = np.zeros(N, dtype=bool)
    centers = []
    for p in range(N):
        if blocked[p]:
            continue
        centers.append(p)
        blocked |= pairwise_distances(m, np.array([p]))[0] < epsilon - DIST_TOL
    return np.array(centers)


def packing_count(m: MeshSpec, epsilon: float) -> int:
    centers = packing_centers(m, epsilon)
    # maximality: the concentric closed epsilon-balls cover everything
    d = pairwise_distances(m, centers)
    if not np.all(d.min(axis=0) <= epsilon + DIST_TOL):
        raise SpectralError("packing is not maximal")
    return len(centers)


@dataclass(frozen=True)
class CoveringRow:
    epsilon: float
    covering: int
    packing: int
    eigenvalue: float  # eigenvalues[covering], the (V+1)-th eigenvalue
    K: float  # eigenvalue * epsilon**2
    counting_C: float  # least C with lambda_{C vol eps^-n} >= eps^-2

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class CoveringReport:
    mesh: MeshSpec
    rows: tuple[CoveringRow, ...]
    index_convention: str = "eigenvalue = sorted_eigenvalues[V(eps)] (0-based), the (V+1)-th"

    @property
    def K_min(self) -> float:
        return min(r.K for r in self.rows)

    def sandwich_holds(self) -> bool:
        return all(r.covering <= r.packing for r in self.rows)

    def to_dict(self):
        return {"mesh": self.mesh.to_dict(), "index_convention": self.index_convention,
                "rows": [r.to_dict() for r in self.rows], "K_min": self.K_min,
                "sandwich_holds": self.sandwich_holds()}


def verify_eigen_covering_bound(m: MeshSpec, epsilon_grid: Sequence[float]) -> CoveringReport:
    """Empirical ``K(eps) = lambda_{V(eps)} eps^2`` over a grid of scales.

    V is the greedy covering number, an upper bound on the minimal one;
    since eigenvalues grow with the index this can only make K larger than
    with the exact V.
    """
    eps = sorted(float(e) for e in epsilon_grid)
    covers = [covering_number(m, e) for e in eps]
    packs = [packing_count(m, e) for e in eps]
    n = m.dim
    need_index = max(covers)
    rep = laplacian_spectrum(m, n_eigs=need_index + 1)
    ev = rep.eigenvalues
    if len(ev) <= need_index:
        raise SpectralError(f"spectrum too shallow: need index {need_index}")
    rows = []
    for e, V, P in zip(eps, covers, packs):
        lam = float(ev[V])
        target = e ** -2
        above = np.flatnonzero(ev >= target)
        if above.size:
            k = int(above[0]) + 1  # 1-based index of the first eigenvalue >= eps^-2
            counting_c = k / (m.volume * e ** -n)
        else:
            counting_c = float("nan")
        rows.append(CoveringRow(e, V, P, lam, lam * e * e, counting_c))
    return CoveringReport(m, tuple(rows))


def refinement_band(reports: Sequence[CoveringReport]) -> dict[float, float]:
    """max/min of K(eps) across refinements, per epsilon."""
    out = {}
    for i, row in enumerate(reports[0].rows):
        ks = [rep.rows[i].K for rep in reports]
        out[row.epsilon] = max(ks) / min(ks)
    return out
