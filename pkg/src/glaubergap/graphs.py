"""Layered graphs and finite balls with ghost boundaries.

A layered graph is a finite connected graph together with the BFS levels
L_0 = {root}, L_1, ..., L_R measured from a distinguished root.  Vertex ids
are canonical: dense integers assigned in BFS order (queue in id order,
neighbors explored in ascending id order), so each level occupies a
contiguous id range and the induced subgraph on levels <= r keeps its ids
under further slicing.  Canonicalization is idempotent.

A ball B_r keeps levels 0..r as interior and exposes level r+1 as a ghost
layer: ghost vertices carry boundary spins but never flip, and edges among
ghosts are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import deque

import numpy as np

from .errors import DisconnectedInput, SelfLoop, RadiusTooLarge, BadParams


@dataclass(frozen=True)
class LayeredGraph:
    """Connected graph with canonical BFS ids and per-vertex levels.

    Adjacency is CSR-like: neighbors of v are ``indices[indptr[v]:indptr[v+1]]``,
    sorted ascending.  ``level_offsets`` has length radius+2 and level i is
    ``range(level_offsets[i], level_offsets[i+1])``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    level: np.ndarray
    level_offsets: np.ndarray
    root: int
    family: str

    @property
    def vertex_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def radius(self) -> int:
        return len(self.level_offsets) - 2

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def level_set(self, i: int) -> range:
        if not 0 <= i <= self.radius:
            raise BadParams(f"level {i} outside 0..{self.radius}")
        return range(int(self.level_offsets[i]), int(self.level_offsets[i + 1]))

    def level_size(self, i: int) -> int:
        return len(self.level_set(i))

    def edge_array(self) -> tuple[np.ndarray, np.ndarray]:
        """All edges as (u, v) arrays with u < v."""
        n = self.vertex_count
        deg = np.diff(self.indptr)
        u = np.repeat(np.arange(n, dtype=np.int32), deg)
        v = self.indices
        keep = u < v
        return u[keep].copy(), v[keep].copy()

    def edges(self):
        u, v = self.edge_array()
        return list(zip(u.tolist(), v.tolist()))

    def validate(self) -> None:
        """Recompute levels by BFS and assert every structural invariant."""
        n = self.vertex_count
        assert self.root == 0, "canonical root id must be 0"
        assert self.level[0] == 0
        lvl = _bfs_levels(self.indptr, self.indices, 0)
        assert (lvl >= 0).all(), "graph must be connected"
        assert np.array_equal(lvl, self.level), "stored levels differ from BFS"
        # levels sorted and contiguous per the canonical id order
        assert np.array_equal(np.sort(self.level), self.level)
        for i in range(self.radius + 1):
            lo, hi = self.level_offsets[i], self.level_offsets[i + 1]
            assert lo < hi
            assert (self.level[lo:hi] == i).all()
        assert self.level_offsets[-1] == n
        # neighbor lists sorted, no self-loops, symmetric, |level jump| <= 1
        for v in range(n):
            nb = self.neighbors(v)
            assert (np.diff(nb) > 0).all(), "neighbor lists must be strictly sorted"
            assert (nb != v).all()
            assert np.all(np.abs(self.level[nb] - self.level[v]) <= 1)
        rev = {(int(b), int(a)) for a, b in zip(*_expand(self.indptr, self.indices))}
        fwd = {(int(a), int(b)) for a, b in zip(*_expand(self.indptr, self.indices))}
        assert fwd == rev, "adjacency must be symmetric"


def _expand(indptr, indices):
    deg = np.diff(indptr)
    u = np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), deg)
    return u, indices


def _bfs_levels(indptr, indices, root) -> np.ndarray:
    n = len(indptr) - 1
    lvl = np.full(n, -1, dtype=np.int32)
    lvl[root] = 0
    q = deque([root])
    while q:
        v = q.popleft()
        for w in indices[indptr[v]:indptr[v + 1]]:
            if lvl[w] < 0:
                lvl[w] = lvl[v] + 1
                q.append(int(w))
    return lvl


def _from_adjacency(adj: dict, root, family: str) -> LayeredGraph:
    """Canonicalize an adjacency dict (vertex -> iterable of neighbors)."""
    if root not in adj:
        raise DisconnectedInput(f"root {root!r} does not appear in the edge set")
    order = {root: 0}
    seq = [root]
    q = deque([root])
    while q:
        v = q.popleft()
        for w in sorted(adj[v]):
            if w not in order:
                order[w] = len(seq)
                seq.append(w)
                q.append(w)
    if len(seq) != len(adj):
        missing = sorted(set(adj) - set(order))[:5]
        raise DisconnectedInput(
            f"{len(adj) - len(seq)} vertices unreachable from root, e.g. {missing}"
        )
    n = len(seq)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for v in seq:
        indptr[order[v] + 1] = len(adj[v])
    np.cumsum(indptr, out=indptr)
    indices = np.empty(indptr[-1], dtype=np.int32)
    for v in seq:
        i = order[v]
        nb = np.sort(np.fromiter((order[w] for w in adj[v]), dtype=np.int32,
                                 count=len(adj[v])))
        indices[indptr[i]:indptr[i + 1]] = nb
    level = _bfs_levels(indptr, indices, 0)
    radius = int(level.max())
    level_offsets = np.searchsorted(level, np.arange(radius + 2), side="left")
    g = LayeredGraph(indptr=indptr, indices=indices, level=level,
                     level_offsets=level_offsets.astype(np.int64), root=0,
                     family=family)
    for a in (g.indptr, g.indices, g.level, g.level_offsets):
        a.setflags(write=False)
    return g


def build_from_edges(edges, root, family: str = "custom(edges)") -> LayeredGraph:
    """Build a canonical LayeredGraph from an iterable of vertex-id pairs.

    Self-loops are rejected; duplicate edges are deduplicated.  Every vertex
    mentioned in ``edges`` must be reachable from ``root``.
    """
    adj: dict = {root: set()}
    for u, v in edges:
        if u == v:
            raise SelfLoop(f"self-loop at vertex {u!r}")
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    return _from_adjacency(adj, root, family)


@dataclass(frozen=True)
class BallSystem:
    """Ball B_m of a layered graph plus its ghost layer L_{m+1}.

    ``interior`` is the induced graph on levels <= m (ids unchanged from the
    parent graph).  Ghosts are relabeled 0..ghost_count-1; each ghost edge
    joins an interior vertex of level m to a ghost.  Edges among ghosts are
    dropped: ghosts only matter through their interior attachments.
    """

    interior: LayeredGraph
    m: int
    ghost_count: int
    ghost_indptr: np.ndarray      # per ghost: slice into ghost_indices
    ghost_indices: np.ndarray     # interior endpoints of ghost edges
    boundary_condition: object = None

    @property
    def n(self) -> int:
        return self.interior.vertex_count

    def ghost_neighbors(self, g: int) -> np.ndarray:
        return self.ghost_indices[self.ghost_indptr[g]:self.ghost_indptr[g + 1]]

    def ghost_edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Ghost edges as (interior endpoint, ghost id) arrays."""
        deg = np.diff(self.ghost_indptr)
        g = np.repeat(np.arange(self.ghost_count, dtype=np.int32), deg)
        return self.ghost_indices.copy(), g

    def ghost_degree(self) -> np.ndarray:
        """Number of ghost edges at each interior vertex."""
        d = np.zeros(self.n, dtype=np.int64)
        np.add.at(d, self.ghost_indices, 1)
        return d

    def with_boundary(self, bc) -> "BallSystem":
        return BallSystem(interior=self.interior, m=self.m,
                          ghost_count=self.ghost_count,
                          ghost_indptr=self.ghost_indptr,
                          ghost_indices=self.ghost_indices,
                          boundary_condition=bc)


def ball(graph: LayeredGraph, r: int) -> BallSystem:
    """Extract B_r with level r+1 as ghost layer.  Requires r < radius."""
    if r < 0:
        raise BadParams(f"ball radius must be >= 0, got {r}")
    if r >= graph.radius:
        raise RadiusTooLarge(
            f"ball radius {r} needs level {r + 1} as ghost layer, but the "
            f"graph has radius {graph.radius}"
        )
    n_int = int(graph.level_offsets[r + 1])
    n_ghost_hi = int(graph.level_offsets[r + 2])
    # interior adjacency: drop neighbors with id >= n_int
    sub_indptr = np.zeros(n_int + 1, dtype=np.int64)
    chunks = []
    for v in range(n_int):
        nb = graph.neighbors(v)
        nb = nb[nb < n_int]
        chunks.append(nb)
        sub_indptr[v + 1] = sub_indptr[v] + len(nb)
    sub_indices = (np.concatenate(chunks).astype(np.int32) if chunks
                   else np.empty(0, dtype=np.int32))
    level = graph.level[:n_int].copy()
    offsets = graph.level_offsets[:r + 2].copy()
    interior = LayeredGraph(indptr=sub_indptr, indices=sub_indices, level=level,
                            level_offsets=offsets, root=0, family=graph.family)
    for a in (interior.indptr, interior.indices, interior.level,
              interior.level_offsets):
        a.setflags(write=False)
    # ghost layer: vertices n_int .. n_ghost_hi-1, keep only edges into L_r
    g_indptr = np.zeros(n_ghost_hi - n_int + 1, dtype=np.int64)
    g_chunks = []
    for g in range(n_int, n_ghost_hi):
        nb = graph.neighbors(g)
        nb = nb[nb < n_int]
        g_chunks.append(nb)
        g_indptr[g - n_int + 1] = g_indptr[g - n_int] + len(nb)
    g_indices = (np.concatenate(g_chunks).astype(np.int32) if g_chunks
                 else np.empty(0, dtype=np.int32))
    g_indptr.setflags(write=False)
    g_indices.setflags(write=False)
    return BallSystem(interior=interior, m=r, ghost_count=n_ghost_hi - n_int,
                      ghost_indptr=g_indptr, ghost_indices=g_indices)


def level_set(graph: LayeredGraph, i: int) -> list:
    return list(graph.level_set(i))


def vertex_boundary(graph: LayeredGraph, subset) -> set:
    """Outer vertex boundary: neighbors of the subset not in the subset."""
    s = set(int(v) for v in subset)
    out = set()
    for v in s:
        for w in graph.neighbors(v):
            if int(w) not in s:
                out.add(int(w))
    return out


def edge_boundary(graph: LayeredGraph, subset) -> set:
    """Edges with exactly one endpoint in the subset, as (inside, outside)."""
    s = set(int(v) for v in subset)
    out = set()
    for v in s:
        for w in graph.neighbors(v):
            if int(w) not in s:
                out.add((v, int(w)))
    return out


def serialize(graph: LayeredGraph) -> str:
    """Plain-text form: one header line, then one 'u v' line per edge."""
    u, v = graph.edge_array()
    lines = [f"# family={graph.family} root={graph.root} radius={graph.radius}"]
    order = np.lexsort((v, u))
    for a, b in zip(u[order], v[order]):
        lines.append(f"{a} {b}")
    return "\n".join(lines) + "\n"


def parse(text: str) -> LayeredGraph:
    """Inverse of :func:`serialize`; round-trips exactly."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise BadParams("missing header line '# family=... root=... radius=...'")
    header = {}
    for tok in lines[0][1:].split():
        k, _, val = tok.partition("=")
        header[k] = val
    try:
        root = int(header["root"])
        family = header["family"]
        radius = int(header["radius"])
    except KeyError as e:
        raise BadParams(f"header missing field {e}") from None
    edges = []
    for ln in lines[1:]:
        a, b = ln.split()
        edges.append((int(a), int(b)))
    g = build_from_edges(edges, root, family=family)
    if g.radius != radius:
        raise BadParams(f"header radius {radius} but BFS radius {g.radius}")
    return g
