"""Dinic max-flow on float capacities.

Arcs are stored in flat lists; arc ``i ^ 1`` is the reverse of arc ``i``. An
undirected edge of capacity ``C`` is a pair of mutually reverse arcs that both
start with capacity ``C``, so its net flow ranges over ``[-C, C]``.
"""
from __future__ import annotations

from collections import deque

INF = float("inf")


class FlowGraph:
    def __init__(self, n_nodes: int, eps: float = 1e-12):
        self.n = n_nodes
        self.eps = eps
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []
        self.base: list[float] = []

    def add_arc(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> int:
        """Add ``u -> v`` with capacity ``cap`` (and ``rev_cap`` backwards)."""
        idx = len(self.to)
        self.head[u].append(idx)
        self.to.append(v)
        self.cap.append(cap)
        self.head[v].append(idx + 1)
        self.to.append(u)
        self.cap.append(rev_cap)
        self.base.extend((cap, rev_cap))
        return idx

    def add_edge(self, u: int, v: int, cap: float) -> int:
        return self.add_arc(u, v, cap, cap)

    def set_capacity(self, arc: int, cap: float, rev_cap: float) -> None:
        self.base[arc] = cap
        self.base[arc ^ 1] = rev_cap

    def reset(self) -> None:
        self.cap = list(self.base)

    def flow_on(self, arc: int) -> float:
        """Net flow along ``arc`` (forward direction)."""
        return self.base[arc] - self.cap[arc]

    def _levels(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        head, to, cap, eps = self.head, self.to, self.cap, self.eps
        while q:
            u = q.popleft()
            for a in head[u]:
                v = to[a]
                if level[v] < 0 and cap[a] > eps:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def _augment(self, s: int, t: int, level: list[int]) -> float:
        head, to, cap, eps = self.head, self.to, self.cap, self.eps
        it = [0] * self.n
        total = 0.0
        while True:
            # iterative DFS for one augmenting path in the level graph
            path: list[int] = []
            u = s
            while u != t:
                arcs = head[u]
                advanced = False
                while it[u] < len(arcs):
                    a = arcs[it[u]]
                    v = to[a]
                    if cap[a] > eps and level[v] == level[u] + 1:
                        path.append(a)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        return total
                    level[u] = -1  # dead end
                    a = path.pop()
                    u = to[a ^ 1]
                    it[u] += 1
            push = min(cap[a] for a in path)
            for a in path:
                cap[a] -= push
                cap[a ^ 1] += push
            total += push

    def max_flow(self, s: int, t: int) -> float:
        self.reset()
        total = 0.0
        while True:
            level = self._levels(s, t)
            if level is None:
                return total
            pushed = self._augment(s, t, level)
            if pushed <= 0:
                return total
            total += pushed

    def source_side(self, s: int) -> list[bool]:
        """Nodes reachable from ``s`` in the residual graph (minimal min cut)."""
        seen = [False] * self.n
        seen[s] = True
        q = deque([s])
        head, to, cap, eps = self.head, self.to, self.cap, self.eps
        while q:
            u = q.popleft()
            for a in head[u]:
                v = to[a]
                if not seen[v] and cap[a] > eps:
                    seen[v] = True
                    q.append(v)
        return seen
