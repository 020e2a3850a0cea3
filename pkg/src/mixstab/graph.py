"""Hypergraph geometry: degrees, distances, separation and annulus tripartitions.

Vertices are the integers ``0..n-1``. Two vertices are adjacent iff they are
co-members of some hyperedge; this single notion of connectivity is used for
distances, separation, boundaries and polymer connectedness.
"""

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property

INF = math.inf


class Hypergraph:
    """Interaction hypergraph with a local dimension per vertex.

    Parameters
    ----------
    n_vertices : int
    hyperedges : iterable of iterables of int
        Vertex order inside a hyperedge is preserved; energy tables attached
        to the hyperedge are indexed in that order.
    q : int
        Local dimension used for every vertex unless ``dims`` is given.
    dims : sequence of int, optional
        Per-vertex local dimensions (used by blocked super-spin models).
    """

    def __init__(self, n_vertices, hyperedges, q=2, dims=None):
        n_vertices = int(n_vertices)
        if n_vertices < 0:
            raise ValueError("n_vertices must be non-negative")
        edges = []
        for e in hyperedges:
            e = tuple(int(v) for v in e)
            if not e:
                raise ValueError("hyperedges must be nonempty")
            if len(set(e)) != len(e):
                raise ValueError(f"hyperedge {e} repeats a vertex")
            if min(e) < 0 or max(e) >= n_vertices:
                raise ValueError(f"hyperedge {e} has a vertex outside 0..{n_vertices - 1}")
            edges.append(e)
        if dims is None:
            if q < 1:
                raise ValueError("q must be positive")
            dims = (int(q),) * n_vertices
        else:
            dims = tuple(int(d) for d in dims)
            if len(dims) != n_vertices or min(dims, default=1) < 1:
                raise ValueError("dims must give a positive dimension per vertex")
        self.n_vertices = n_vertices
        self.hyperedges = tuple(edges)
        self.dims = dims

    def __repr__(self):
        return f"Hypergraph(n_vertices={self.n_vertices}, n_edges={len(self.hyperedges)}, q={self.q})"

    @property
    def q(self):
        return max(self.dims, default=1)

    @property
    def vertices(self):
        return frozenset(range(self.n_vertices))

    @cached_property
    def incident(self):
        """Tuple of hyperedge indices incident to each vertex."""
        inc = [[] for _ in range(self.n_vertices)]
        for k, e in enumerate(self.hyperedges):
            for v in e:
                inc[v].append(k)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def neighbors(self):
        """Tuple of frozensets: vertices sharing a hyperedge with each vertex."""
        nb = [set() for _ in range(self.n_vertices)]
        for e in self.hyperedges:
            for v in e:
                nb[v].update(e)
        for v in range(self.n_vertices):
            nb[v].discard(v)
        return tuple(frozenset(s) for s in nb)

    @property
    def max_degree(self):
        return max((len(i) for i in self.incident), default=0)

    @property
    def max_edge_size(self):
        return max((len(e) for e in self.hyperedges), default=0)

    def region(self, r):
        r = frozenset(int(v) for v in r)
        bad = [v for v in r if v < 0 or v >= self.n_vertices]
        if bad:
            raise ValueError(f"vertices {sorted(bad)} are not in the hypergraph")
        return r

    def bfs_distances(self, sources, blocked=frozenset()):
        """Shortest-path distance from ``sources`` to every vertex (INF if unreachable)."""
        dist = [INF] * self.n_vertices
        queue = deque()
        for s in sources:
            if s not in blocked:
                dist[s] = 0
                queue.append(s)
        while queue:
            v = queue.popleft()
            for w in self.neighbors[v]:
                if dist[w] == INF and w not in blocked:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def components(self, region=None):
        """Connected components of the sub-hypergraph induced by ``region``."""
        region = self.vertices if region is None else self.region(region)
        seen = set()
        comps = []
        for s in sorted(region):
            if s in seen:
                continue
            comp = {s}
            stack = [s]
            while stack:
                v = stack.pop()
                for w in self.neighbors[v]:
                    if w in region and w not in comp:
                        comp.add(w)
                        stack.append(w)
            seen |= comp
            comps.append(frozenset(comp))
        return comps

    def is_connected(self, region):
        region = self.region(region)
        return len(region) > 0 and len(self.components(region)) == 1

    def touches(self, r1, r2):
        """True iff some hyperedge contains a vertex of ``r1`` and a vertex of ``r2``."""
        r2 = frozenset(r2)
        return any(self.neighbors[v] & r2 for v in r1) or bool(frozenset(r1) & r2)

    def diameter(self):
        best = 0
        for v in range(self.n_vertices):
            d = max(self.bfs_distances([v]))
            best = max(best, d)
        return best


@dataclass(frozen=True)
class Tripartition:
    A: frozenset
    B: frozenset
    C: frozenset

    def __post_init__(self):
        for name in "ABC":
            object.__setattr__(self, name, frozenset(int(v) for v in getattr(self, name)))
        if self.A & self.B or self.A & self.C or self.B & self.C:
            raise ValueError("A, B, C must be pairwise disjoint")

    @property
    def all(self):
        return self.A | self.B | self.C

    def check(self, g):
        """Raise unless the regions partition ``g``'s vertices and B separates A from C."""
        if self.all != g.vertices:
            raise ValueError("A, B, C must cover every vertex exactly once")
        if not separates(g, self):
            raise ValueError("B does not separate A from C")
        return self


def max_degree(g):
    return g.max_degree


def max_edge_size(g):
    return g.max_edge_size


def graph_distance(g, a, c):
    """Minimal path length between a site of ``a`` and a site of ``c`` (INF if none)."""
    a, c = g.region(a), g.region(c)
    if not a or not c:
        raise ValueError("graph_distance needs nonempty regions")
    dist = g.bfs_distances(a)
    return min(dist[v] for v in c)


def separates(g, t):
    """True iff every path from A to C passes through B."""
    if not t.A or not t.C:
        return True
    dist = g.bfs_distances(t.A, blocked=t.B)
    return all(dist[v] == INF for v in t.C)


def boundary_set(g, r):
    """Sites of ``r`` sharing a hyperedge with a site outside ``r``."""
    r = g.region(r)
    return frozenset(v for v in r if g.neighbors[v] - r)


def annulus_tripartition(g, center, radius):
    """A = center, B = sites at distance 1..radius from it, C = the rest."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    a = g.region(center)
    if not a:
        raise ValueError("center must be nonempty")
    dist = g.bfs_distances(a)
    b = frozenset(v for v in range(g.n_vertices) if 1 <= dist[v] <= radius)
    c = g.vertices - a - b
    return Tripartition(a, b, c)


def path(n, q=2):
    return Hypergraph(n, [(i, i + 1) for i in range(n - 1)], q=q)


def cycle(n, q=2):
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    return Hypergraph(n, [(i, (i + 1) % n) for i in range(n)], q=q)


def grid_index(i, j, M):
    return i * M + j


def grid(L, M, periodic=False, q=2):
    """L x M square lattice with nearest-neighbour edges; vertex (i, j) -> i*M + j."""
    edges = set()
    for i in range(L):
        for j in range(M):
            v = grid_index(i, j, M)
            for di, dj in ((0, 1), (1, 0)):
                ii, jj = i + di, j + dj
                if periodic:
                    ii, jj = ii % L, jj % M
                elif ii >= L or jj >= M:
                    continue
                w = grid_index(ii, jj, M)
                if w != v:
                    edges.add((min(v, w), max(v, w)))
    return Hypergraph(L * M, sorted(edges), q=q)
