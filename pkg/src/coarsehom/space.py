"""Finite windows of bounded-degree model spaces.

A window is the metric ball of some radius about a basepoint of an infinite
(or large) model graph. The outermost shell is kept and flagged as non-interior:
those vertices act as sinks through which mass can escape to infinity.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import sparse

DEFAULT_VERTEX_BUDGET = 250_000
MAX_CUSTOM_DEGREE = 64


class SpaceError(ValueError):
    """Invalid space description or window request."""


class WindowBudgetError(SpaceError):
    pass


@dataclass(frozen=True)
class SpaceSpec:
    """Description of a model space.

    ``family`` is one of ``lattice`` (``n``), ``tree`` (``k``), ``product``
    (``a``, ``b``) or ``custom`` (``vertices``, ``edges``, ``volumes``,
    optional ``sinks`` and ``basepoint``).
    """

    family: str
    n: int | None = None
    k: int | None = None
    a: "SpaceSpec | None" = None
    b: "SpaceSpec | None" = None
    vertices: tuple | None = None
    edges: tuple | None = None
    volumes: tuple | None = None
    sinks: tuple | None = None
    basepoint: Any = None
    edge_length_unit: float = 1.0

    def __post_init__(self):
        if self.edge_length_unit <= 0:
            raise SpaceError("edge_length_unit: must be positive")
        if self.family == "lattice":
            if not isinstance(self.n, int) or not 1 <= self.n <= 4:
                raise SpaceError(f"n: lattice dimension must be in [1, 4], got {self.n!r}")
        elif self.family == "tree":
            if not isinstance(self.k, int) or not 2 <= self.k <= 6:
                raise SpaceError(f"k: tree branching must be in [2, 6], got {self.k!r}")
        elif self.family == "product":
            if not isinstance(self.a, SpaceSpec) or not isinstance(self.b, SpaceSpec):
                raise SpaceError("product: fields 'a' and 'b' must both be space specs")
        elif self.family == "custom":
            _validate_custom(self)
        else:
            raise SpaceError(f"family: unknown family {self.family!r}")

    # construction helpers -------------------------------------------------
    @classmethod
    def lattice(cls, n: int) -> "SpaceSpec":
        return cls("lattice", n=n)

    @classmethod
    def tree(cls, k: int) -> "SpaceSpec":
        return cls("tree", k=k)

    @classmethod
    def product(cls, a: "SpaceSpec", b: "SpaceSpec") -> "SpaceSpec":
        return cls("product", a=a, b=b)

    @classmethod
    def custom(cls, vertices, edges, volumes=None, sinks=None, basepoint=None) -> "SpaceSpec":
        verts = tuple(_hashable(v) for v in vertices)
        return cls(
            "custom",
            vertices=verts,
            edges=tuple((_hashable(x), _hashable(y)) for x, y in edges),
            volumes=None if volumes is None else tuple(float(v) for v in volumes),
            sinks=None if sinks is None else tuple(_hashable(s) for s in sinks),
            basepoint=verts[0] if basepoint is None and verts else _hashable(basepoint),
        )

    # implicit graph interface --------------------------------------------
    def root(self):
        if self.family == "lattice":
            return (0,) * self.n
        if self.family == "tree":
            return ()
        if self.family == "product":
            return (self.a.root(), self.b.root())
        return self.basepoint

    def neighbors(self, v) -> list:
        """Neighbors of a vertex label, in a fixed deterministic order."""
        if self.family == "lattice":
            out = []
            for i in range(self.n):
                for step in (-1, 1):
                    w = list(v)
                    w[i] += step
                    out.append(tuple(w))
            return out
        if self.family == "tree":
            children = self.k if len(v) == 0 else self.k - 1
            out = [v[:-1]] if v else []
            out.extend(v + (j,) for j in range(children))
            return out
        if self.family == "product":
            x, y = v
            return [(w, y) for w in self.a.neighbors(x)] + [(x, w) for w in self.b.neighbors(y)]
        return list(self._custom_adjacency()[v])

    def volume_of(self, v) -> float:
        if self.family == "custom" and self.volumes is not None:
            return self.volumes[self._custom_index()[v]]
        if self.family == "product":
            return self.a.volume_of(v[0]) * self.b.volume_of(v[1])
        return 1.0

    def _custom_index(self) -> dict:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {v: i for i, v in enumerate(self.vertices)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def _custom_adjacency(self) -> dict:
        adj = self.__dict__.get("_adj")
        if adj is None:
            adj = {v: [] for v in self.vertices}
            for x, y in self.edges:
                adj[x].append(y)
                adj[y].append(x)
            order = self._custom_index()
            adj = {v: tuple(sorted(set(ws), key=order.__getitem__)) for v, ws in adj.items()}
            object.__setattr__(self, "_adj", adj)
        return adj

    # serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        if self.family == "lattice":
            return {"family": "lattice", "n": self.n}
        if self.family == "tree":
            return {"family": "tree", "k": self.k}
        if self.family == "product":
            return {"family": "product", "a": self.a.to_dict(), "b": self.b.to_dict()}
        d = {
            "family": "custom",
            "vertices": [_jsonable(v) for v in self.vertices],
            "edges": [[_jsonable(x), _jsonable(y)] for x, y in self.edges],
        }
        if self.volumes is not None:
            d["volumes"] = list(self.volumes)
        if self.sinks is not None:
            d["sinks"] = [_jsonable(s) for s in self.sinks]
        if self.basepoint != self.vertices[0]:
            d["basepoint"] = _jsonable(self.basepoint)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceSpec":
        if not isinstance(d, dict):
            raise SpaceError("space spec must be a JSON object")
        family = d.get("family")
        allowed = {
            "lattice": {"family", "n"},
            "tree": {"family", "k"},
            "product": {"family", "a", "b"},
            "custom": {"family", "vertices", "edges", "volumes", "sinks", "basepoint"},
        }
        if family not in allowed:
            raise SpaceError(f"family: unknown family {family!r}")
        extra = sorted(set(d) - allowed[family])
        if extra:
            raise SpaceError(f"{extra[0]}: unknown field for family {family!r}")
        if family == "lattice":
            return cls.lattice(d.get("n"))
        if family == "tree":
            return cls.tree(d.get("k"))
        if family == "product":
            return cls.product(cls.from_dict(d.get("a")), cls.from_dict(d.get("b")))
        for key in ("vertices", "edges"):
            if key not in d:
                raise SpaceError(f"{key}: required for custom spaces")
        return cls.custom(d["vertices"], d["edges"], d.get("volumes"), d.get("sinks"), d.get("basepoint"))


def _hashable(v):
    if isinstance(v, list):
        return tuple(_hashable(x) for x in v)
    return v


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _validate_custom(spec: SpaceSpec) -> None:
    if not spec.vertices:
        raise SpaceError("vertices: custom space needs at least one vertex")
    if len(set(spec.vertices)) != len(spec.vertices):
        raise SpaceError("vertices: duplicate vertex ids")
    known = set(spec.vertices)
    degree = dict.fromkeys(spec.vertices, 0)
    for x, y in spec.edges:
        if x not in known or y not in known:
            raise SpaceError(f"edges: edge ({x!r}, {y!r}) references an unknown vertex")
        if x == y:
            raise SpaceError(f"edges: self-loop at {x!r}")
        degree[x] += 1
        degree[y] += 1
    if max(degree.values()) > MAX_CUSTOM_DEGREE:
        raise SpaceError(f"edges: maximum degree exceeds {MAX_CUSTOM_DEGREE}")
    if spec.volumes is not None:
        if len(spec.volumes) != len(spec.vertices):
            raise SpaceError("volumes: length must match vertices")
        if any(not v > 0 for v in spec.volumes):
            raise SpaceError("volumes: all volumes must be positive")
    if spec.sinks is not None and not set(spec.sinks) <= known:
        raise SpaceError("sinks: references an unknown vertex")
    if spec.basepoint not in known:
        raise SpaceError("basepoint: not a vertex")
    # connectivity
    adj = {v: [] for v in spec.vertices}
    for x, y in spec.edges:
        adj[x].append(y)
        adj[y].append(x)
    seen = {spec.vertices[0]}
    stack = [spec.vertices[0]]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != len(spec.vertices):
        raise SpaceError("edges: custom graph is disconnected")


@dataclass(frozen=True)
class Region:
    """A set of window vertices, stored as sorted indices."""

    members: tuple[int, ...]
    window_id: str = ""

    @classmethod
    def of(cls, w: "Window", members: Iterable[int]) -> "Region":
        if isinstance(members, np.ndarray) and members.dtype == bool:
            arr = np.flatnonzero(members)
        else:
            arr = np.unique(np.fromiter((int(m) for m in members), dtype=np.int64))
        if arr.size and (arr[0] < 0 or arr[-1] >= w.n_vertices):
            raise SpaceError("region: vertex index outside the window")
        return cls(tuple(arr.tolist()), w.id)

    def __len__(self):
        return len(self.members)

    def __contains__(self, v):
        return v in self._set

    def __iter__(self):
        return iter(self.members)

    @property
    def _set(self) -> frozenset:
        s = self.__dict__.get("_s")
        if s is None:
            s = frozenset(self.members)
            object.__setattr__(self, "_s", s)
        return s

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[list(self.members)] = True
        return m

    def issubset(self, other: "Region") -> bool:
        return self._set <= other._set


@dataclass(frozen=True, eq=False)
class Window:
    """Finite vertex-weighted graph with an interior/sink split.

    Vertices are integers ``0..n-1``; ``labels[i]`` is the model-space label of
    vertex ``i``. Edges have unit length and the metric is the graph metric.
    """

    labels: tuple
    adjacency: tuple[tuple[int, ...], ...]
    interior: np.ndarray
    volume: np.ndarray
    spec: SpaceSpec | None = None
    radius: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.interior.setflags(write=False)
        self.volume.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    @property
    def sinks(self) -> np.ndarray:
        return np.flatnonzero(~self.interior)

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.adjacency) for j in nb if i < j]

    def edge_array(self) -> np.ndarray:
        if "edge_array" not in self._cache:
            self._cache["edge_array"] = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        return self._cache["edge_array"]

    @property
    def id(self) -> str:
        if "id" not in self._cache:
            payload = json.dumps(self._payload(), sort_keys=True, separators=(",", ":"))
            self._cache["id"] = hashlib.sha256(payload.encode()).hexdigest()[:16]
        return self._cache["id"]

    def index(self, label) -> int:
        lookup = self._cache.get("index")
        if lookup is None:
            lookup = {lab: i for i, lab in enumerate(self.labels)}
            self._cache["index"] = lookup
        try:
            return lookup[_hashable(label)]
        except KeyError:
            raise SpaceError(f"unknown vertex label {label!r}") from None

    def max_degree(self) -> int:
        return max((len(nb) for nb in self.adjacency), default=0)

    # metric ---------------------------------------------------------------
    def adjacency_matrix(self) -> sparse.csr_matrix:
        if "adj" not in self._cache:
            e = self.edge_array()
            n = self.n_vertices
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            self._cache["adj"] = sparse.csr_matrix(
                (np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(n, n))
        return self._cache["adj"]

    def distances_from(self, sources: int | Iterable[int], cutoff: int | None = None) -> np.ndarray:
        """BFS distances from a vertex or vertex set; ``-1`` marks unreached."""
        if isinstance(sources, (int, np.integer)):
            sources = [int(sources)]
        src = np.asarray(list(sources), dtype=np.int64)
        if src.size and (src.min() < 0 or src.max() >= self.n_vertices):
            raise SpaceError(f"unknown vertex id in {sorted(set(src.tolist()))[:5]}")
        dist = np.full(self.n_vertices, -1, dtype=np.int64)
        dist[src] = 0
        frontier = np.zeros(self.n_vertices, dtype=np.int32)
        frontier[src] = 1
        A = self.adjacency_matrix()
        d = 0
        while frontier.any() and (cutoff is None or d < cutoff):
            reached = (A @ frontier > 0) & (dist < 0)
            d += 1
            dist[reached] = d
            frontier = reached.astype(np.int32)
        return dist

    def distance(self, x: int, y: int) -> int:
        d = self.distances_from(x)[y]
        return int(d) if d >= 0 else np.inf

    def pairs_within(self, reach: int) -> np.ndarray:
        """All vertex pairs ``(x, y)`` with ``x < y`` and ``d(x, y) <= reach``."""
        key = ("pairs", reach)
        if key not in self._cache:
            if reach < 1:
                raise SpaceError("reach: must be >= 1")
            if reach == 1:
                pairs = self.edges
            else:
                pairs = []
                for x in range(self.n_vertices):
                    near = self._local_ball(x, reach)
                    pairs.extend((x, y) for y in near if y > x)
            arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]

    def _local_ball(self, x: int, radius: int) -> list[int]:
        seen = {x: 0}
        frontier = [x]
        for d in range(radius):
            nxt = []
            for v in frontier:
                for w in self.adjacency[v]:
                    if w not in seen:
                        seen[w] = d + 1
                        nxt.append(w)
            frontier = nxt
        return sorted(seen)

    def _check_vertex(self, v) -> None:
        if not (isinstance(v, (int, np.integer)) and 0 <= v < self.n_vertices):
            raise SpaceError(f"unknown vertex id {v!r}")

    # serialization --------------------------------------------------------
    def _payload(self) -> dict:
        return {
            "vertices": [_jsonable(v) for v in self.labels],
            "edges": [list(e) for e in self.edges],
            "interior": [bool(b) for b in self.interior],
            "volumes": [float(v) for v in self.volume],
        }

    def to_dict(self) -> dict:
        return {"id": self.id, **self._payload()}

    @classmethod
    def from_dict(cls, d: dict) -> "Window":
        labels = tuple(_hashable(v) for v in d["vertices"])
        n = len(labels)
        adj = [[] for _ in range(n)]
        for i, j in d["edges"]:
            adj[i].append(j)
            adj[j].append(i)
        w = cls(
            labels=labels,
            adjacency=tuple(tuple(sorted(a)) for a in adj),
            interior=np.array(d["interior"], dtype=bool),
            volume=np.array(d["volumes"], dtype=float),
        )
        if "id" in d and d["id"] != w.id:
            raise SpaceError("id: window id does not match its content")
        return w


def build_window(spec: SpaceSpec, radius: int | None,
                 vertex_budget: int = DEFAULT_VERTEX_BUDGET) -> Window:
    """Ball of ``radius`` about the basepoint of ``spec``, outer shell as sinks.

    ``radius=None`` is accepted for custom spaces only and takes the whole
    graph (sinks then come from the spec's ``sinks`` field).
    """
    if radius is None:
        if spec.family != "custom":
            raise SpaceError("radius: required for non-custom families")
    elif not isinstance(radius, (int, np.integer)) or radius < 0:
        raise SpaceError(f"radius: must be a nonnegative integer, got {radius!r}")

    root = spec.root()
    dist = {root: 0}
    order = [root]
    head = 0
    while head < len(order):
        v = order[head]
        head += 1
        if radius is not None and dist[v] >= radius:
            continue
        for w in spec.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                order.append(w)
                if len(order) > vertex_budget:
                    raise WindowBudgetError(
                        f"window exceeds vertex budget {vertex_budget} (radius {radius})")

    if spec.family == "lattice":
        order.sort()
    elif spec.family == "custom":
        pos = spec._custom_index()
        order.sort(key=pos.__getitem__)
    index = {v: i for i, v in enumerate(order)}
    adjacency = tuple(
        tuple(sorted(index[w] for w in spec.neighbors(v) if w in index)) for v in order
    )
    interior = np.ones(len(order), dtype=bool)
    if radius is not None and radius > 0:
        for i, v in enumerate(order):
            if dist[v] == radius:
                interior[i] = False
    if spec.family == "custom" and spec.sinks:
        for s in spec.sinks:
            if s in index:
                interior[index[s]] = False
    if not interior.any():
        raise SpaceError("window has an empty interior")
    volume = np.array([spec.volume_of(v) for v in order], dtype=float)
    return Window(tuple(order), adjacency, interior, volume, spec=spec, radius=radius)


def ball(w: Window, center: int, radius: int) -> Region:
    """All window vertices within graph distance ``radius`` of ``center``."""
    w._check_vertex(center)
    if radius < 0:
        raise SpaceError("radius: must be nonnegative")
    dist = w.distances_from(center, cutoff=radius)
    return Region.of(w, dist >= 0)


def r_boundary(w: Window, R: Region | Sequence[int], r: int) -> Region:
    """Symmetric r-collar: points within ``r`` of both R and its complement."""
    if r < 1:
        raise SpaceError("r: must be a positive integer")
    members = R.members if isinstance(R, Region) else tuple(sorted(set(R)))
    if not members:
        raise SpaceError("region is empty; its boundary is undefined")
    if len(members) >= w.n_vertices:
        raise SpaceError("region is the whole window; its boundary is undefined")
    inside = np.zeros(w.n_vertices, dtype=bool)
    inside[list(members)] = True
    # distances to R (for outside points) and to R^c (for inside points) are
    # realized through the layers adjacent to the interface
    e = w.edge_array()
    cross = e[inside[e[:, 0]] != inside[e[:, 1]]]
    ends = cross.ravel()
    inner = np.unique(ends[inside[ends]])
    outer = np.unique(ends[~inside[ends]])
    if not len(inner):
        return Region.of(w, ())
    near_r = w.distances_from(inner, cutoff=r) >= 0
    near_rc = w.distances_from(outer, cutoff=r) >= 0
    return Region.of(w, (near_r & ~inside) | (near_rc & inside))


def region_volume(w: Window, R: Region | Iterable[int]) -> float:
    members = list(R.members if isinstance(R, Region) else R)
    return float(w.volume[members].sum()) if members else 0.0
