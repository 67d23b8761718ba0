"""Uniformly finite 0- and 1-chains on a window.

Sign convention: the boundary of the oriented pair ``x -> y`` is
``delta_y - delta_x``. A 1-chain ``b`` carries the mass of a 0-chain ``c`` out
to the sinks exactly when ``boundary(b) == -c`` on the interior.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .space import Region, Window


class ChainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Chain0:
    """Real 0-chain supported on the interior of ``window``.

    Coefficients are held densely (one entry per window vertex); JSON output
    is sparse.
    """

    window: Window
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.window.n_vertices,):
            raise ChainError("coefficient vector does not match the window size")
        if np.any(c[~self.window.interior] != 0):
            raise ChainError("0-chain support must lie in the window interior")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, w: Window) -> "Chain0":
        return cls(w, np.zeros(w.n_vertices))

    @classmethod
    def from_items(cls, w: Window, items: Iterable[tuple[int, float]]) -> "Chain0":
        c = np.zeros(w.n_vertices)
        for v, val in items:
            w._check_vertex(v)
            c[v] += val
        return cls(w, c)

    @classmethod
    def delta(cls, w: Window, v: int, value: float = 1.0) -> "Chain0":
        return cls.from_items(w, [(v, value)])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs)

    def total(self) -> float:
        return float(self.coeffs.sum())

    def __add__(self, other: "Chain0") -> "Chain0":
        _same_window(self.window, other.window)
        return Chain0(self.window, self.coeffs + other.coeffs)

    def __sub__(self, other: "Chain0") -> "Chain0":
        _same_window(self.window, other.window)
        return Chain0(self.window, self.coeffs - other.coeffs)

    def __mul__(self, t: float) -> "Chain0":
        return Chain0(self.window, self.coeffs * t)

    __rmul__ = __mul__

    def __neg__(self) -> "Chain0":
        return Chain0(self.window, -self.coeffs)

    def to_dict(self) -> dict:
        return {"window": self.window.id,
                "coeffs": [[int(v), float(self.coeffs[v])] for v in self.support]}

    @classmethod
    def from_dict(cls, w: Window, d: dict) -> "Chain0":
        if d.get("window") not in (None, w.id):
            raise ChainError("window: chain refers to a different window")
        return cls.from_items(w, ((int(v), float(x)) for v, x in d["coeffs"]))


@dataclass(frozen=True, eq=False)
class Chain1:
    """Real 1-chain on vertex pairs of bounded distance.

    ``pairs[i] = (x, y)`` with ``x < y``; ``values[i]`` is the amount carried
    from ``x`` to ``y`` (negative values run from ``y`` to ``x``).
    """

    window: Window
    span: int
    pairs: np.ndarray
    values: np.ndarray
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(pairs) != len(values):
            raise ChainError("pairs and values differ in length")
        if self.span < 1:
            raise ChainError("span: must be >= 1")
        if len(pairs):
            if np.any(pairs[:, 0] >= pairs[:, 1]):
                raise ChainError("pairs must be stored with x < y")
            if pairs.min() < 0 or pairs.max() >= self.window.n_vertices:
                raise ChainError("pair references a vertex outside the window")
            if not self._checked:
                allowed = {tuple(p) for p in self.window.pairs_within(self.span)}
                for p in pairs:
                    if tuple(p) not in allowed:
                        raise ChainError(f"pair {tuple(p)} exceeds span {self.span}")
        pairs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_items(cls, w: Window, span: int, items: Iterable[tuple[int, int, float]]) -> "Chain1":
        acc: dict[tuple[int, int], float] = {}
        for x, y, val in items:
            if x == y:
                raise ChainError("degenerate pair (x, x)")
            key, s = ((x, y), 1.0) if x < y else ((y, x), -1.0)
            acc[key] = acc.get(key, 0.0) + s * val
        keys = sorted(acc)
        return cls(w, span, np.array(keys, dtype=np.int64).reshape(-1, 2),
                   np.array([acc[k] for k in keys]))

    @classmethod
    def along_path(cls, w: Window, span: int, path: Iterable[int], weight: float = 1.0) -> "Chain1":
        path = list(path)
        return cls.from_items(w, span, ((path[i], path[i + 1], weight) for i in range(len(path) - 1)))

    def nonzero(self, tol: float = 0.0) -> "Chain1":
        keep = np.abs(self.values) > tol
        return Chain1(self.window, self.span, self.pairs[keep], self.values[keep], _checked=True)

    def __add__(self, other: "Chain1") -> "Chain1":
        _same_window(self.window, other.window)
        items = [(int(x), int(y), float(v)) for (x, y), v in zip(self.pairs, self.values)]
        items += [(int(x), int(y), float(v)) for (x, y), v in zip(other.pairs, other.values)]
        return Chain1.from_items(self.window, max(self.span, other.span), items)

    def to_dict(self) -> dict:
        return {"window": self.window.id, "span": self.span,
                "coeffs": [[int(x), int(y), float(v)] for (x, y), v in zip(self.pairs, self.values)]}

    @classmethod
    def from_dict(cls, w: Window, d: dict) -> "Chain1":
        if d.get("window") not in (None, w.id):
            raise ChainError("window: chain refers to a different window")
        return cls.from_items(w, int(d["span"]), ((int(x), int(y), float(v)) for x, y, v in d["coeffs"]))


def _same_window(a: Window, b: Window) -> None:
    if a is not b and a.id != b.id:
        raise ChainError("chains live on different windows")


def full_boundary(b: Chain1) -> np.ndarray:
    """Boundary over every window vertex, sinks included."""
    out = np.zeros(b.window.n_vertices)
    if len(b.pairs):
        np.add.at(out, b.pairs[:, 1], b.values)
        np.subtract.at(out, b.pairs[:, 0], b.values)
    return out


def boundary(b: Chain1) -> Chain0:
    """Boundary restricted to the interior; sinks absorb the rest."""
    out = full_boundary(b)
    out[~b.window.interior] = 0.0
    return Chain0(b.window, out)


def escaped_mass(b: Chain1) -> float:
    """Net mass delivered into the sinks by ``b``."""
    return float(full_boundary(b)[~b.window.interior].sum())


def uf_norm0(c: Chain0, r: int) -> float:
    """Largest total absolute mass of ``c`` meeting any r-ball of the window."""
    if r < 1:
        raise ChainError("r: must be >= 1")
    w = c.window
    absval = np.abs(c.coeffs)
    if not absval.any():
        return 0.0
    support = np.flatnonzero(absval)
    # only balls around points within r of the support can see any mass
    centers = np.flatnonzero(w.distances_from(support.tolist(), cutoff=r) >= 0)
    best = 0.0
    for v in centers:
        best = max(best, float(absval[w._local_ball(int(v), r)].sum()))
    return best


def throughput(b: Chain1) -> float:
    """Max over vertices of the total absolute load on incident pairs."""
    load = np.zeros(b.window.n_vertices)
    if len(b.pairs):
        a = np.abs(b.values)
        np.add.at(load, b.pairs[:, 0], a)
        np.add.at(load, b.pairs[:, 1], a)
    return float(load.max()) if len(load) else 0.0


def window_sum(c: Chain0, R: Region | Iterable[int]) -> float:
    members = list(R.members if isinstance(R, Region) else R)
    return float(c.coeffs[members].sum()) if members else 0.0
