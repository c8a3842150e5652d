"""Graph generators: regular trees, hyperbolic tilings, expander-wired trees.

All generators produce canonical :class:`~glaubergap.graphs.LayeredGraph`
objects.  Randomized generators draw from numpy's PCG64 stream seeded by a
64-bit integer; layered constructions take one independent child stream per
level (``SeedSequence(seed, spawn_key=(level,))``), so identical parameters
and seed give bit-identical output.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (BadParams, NotHyperbolic, InfeasibleDegree,
                     RetryBudgetExceeded)
from .graphs import LayeredGraph, _from_adjacency

RNG_ALGORITHM = "pcg64"
REGULAR_RETRY_CAP = 10_000


def gen_tree(delta: int, depth: int) -> LayeredGraph:
    """Rooted tree: the root has ``delta`` children, internal vertices
    ``delta - 1``, leaves at level ``depth``."""
    if delta < 3:
        raise BadParams(f"tree degree must be >= 3, got {delta}")
    if depth < 1:
        raise BadParams(f"tree depth must be >= 1, got {depth}")
    adj: dict[int, list] = {0: []}
    frontier = [0]
    nxt = 1
    for level in range(1, depth + 1):
        new_frontier = []
        for parent in frontier:
            n_children = delta if parent == 0 else delta - 1
            for _ in range(n_children):
                adj[parent].append(nxt)
                adj[nxt] = [parent]
                new_frontier.append(nxt)
                nxt += 1
        frontier = new_frontier
    return _from_adjacency(adj, 0, family=f"tree(delta={delta})")


# ---------------------------------------------------------------------------
# hyperbolic tilings
# ---------------------------------------------------------------------------

class _Patch:
    """Simply connected patch of the (v, s) tiling under construction.

    The patch boundary is a simple cycle held as doubly linked successor and
    predecessor tables.  A boundary vertex's faces form a contiguous fan, so
    its two gap edges are exactly (x, prv[x]) and (x, nxt[x]).  Completing a
    vertex fills the gap with new s-gon faces one at a time, walking from the
    nxt side toward the prv side; a face absorbs ("wraps") an adjacent
    boundary vertex whenever that vertex has exactly one face slot left, which
    is what closes shared sides between consecutive faces.
    """

    def __init__(self, v: int, s: int):
        self.v = v
        self.s = s
        self.adj: list[list[int]] = []
        self.faces_at: list[int] = []
        self.nxt: dict[int, int] = {}
        self.prv: dict[int, int] = {}
        self.face_list: list[tuple] = []
        # bootstrap: one s-gon through the root
        for i in range(s):
            self._new_vertex()
        cyc = list(range(s))
        for i in range(s):
            a, b = cyc[i], cyc[(i + 1) % s]
            self.adj[a].append(b)
            self.adj[b].append(a)
            self.nxt[a] = b
            self.prv[b] = a
            self.faces_at[i] = 1
        self.face_list.append(tuple(cyc))

    def _new_vertex(self) -> int:
        self.adj.append([])
        self.faces_at.append(0)
        return len(self.adj) - 1

    def _add_edge(self, a: int, b: int) -> None:
        assert b not in self.adj[a], f"edge ({a},{b}) created twice"
        self.adj[a].append(b)
        self.adj[b].append(a)

    def _wrap_forward(self, path: list) -> None:
        # extend along nxt while the far end has exactly one face slot left
        while self.v - self.faces_at[path[-1]] == 1 and len(path) < self.s:
            path.append(self.nxt[path[-1]])
            assert path[-1] != path[0], "patch boundary collapsed"

    def complete(self, x: int) -> None:
        """Attach faces at x until its face count reaches v."""
        v, s = self.v, self.s
        while self.faces_at[x] < v:
            if self.faces_at[x] < v - 1:
                path = [x, self.nxt[x]]
                self._wrap_forward(path)
                k = s - len(path)
                assert k >= 1, "non-final face needs a fresh vertex"
                fresh = [self._new_vertex() for _ in range(k)]
                chain = [path[-1]] + fresh + [x]
                for a, b in zip(chain, chain[1:]):
                    self._add_edge(a, b)
                face = path + fresh
                # boundary: arc x -> ... -> path[-1] becomes x -> fresh[::-1] -> path[-1]
                for w in path[1:-1]:
                    self._drop_from_boundary(w)
                arc = [x] + fresh[::-1] + [path[-1]]
                for a, b in zip(arc, arc[1:]):
                    self.nxt[a] = b
                    self.prv[b] = a
            else:
                start = [x, self.nxt[x]]
                self._wrap_forward(start)
                end = [self.prv[x]]
                while self.v - self.faces_at[end[-1]] == 1 \
                        and len(start) + len(end) < s:
                    end.append(self.prv[end[-1]])
                    assert end[-1] != x, "patch boundary collapsed"
                k = s - len(start) - len(end)
                assert k >= 0, "final face does not fit the gap"
                assert k > 0 or start[-1] != end[-1]
                fresh = [self._new_vertex() for _ in range(k)]
                chain = [start[-1]] + fresh + [end[-1]]
                for a, b in zip(chain, chain[1:]):
                    self._add_edge(a, b)
                face = start + fresh + end[::-1]
                for w in start[1:-1] + end[:-1] + [x]:
                    self._drop_from_boundary(w)
                arc = [end[-1]] + fresh[::-1] + [start[-1]]
                for a, b in zip(arc, arc[1:]):
                    self.nxt[a] = b
                    self.prv[b] = a
            assert len(face) == s
            for w in face:
                self.faces_at[w] += 1
            self.face_list.append(tuple(face))

    def _drop_from_boundary(self, w: int) -> None:
        self.nxt.pop(w, None)
        self.prv.pop(w, None)

    def levels(self) -> np.ndarray:
        n = len(self.adj)
        lvl = np.full(n, -1, dtype=np.int32)
        lvl[0] = 0
        q = deque([0])
        while q:
            a = q.popleft()
            la = lvl[a] + 1
            for b in self.adj[a]:
                if lvl[b] < 0:
                    lvl[b] = la
                    q.append(b)
        return lvl


def _build_patch(v: int, s: int, depth: int) -> tuple[_Patch, np.ndarray]:
    """Complete every vertex at BFS distance <= depth from the root.

    Levels are recomputed between passes because a face added later can
    shorten distances; the loop reaches a fixed point in a few passes.
    """
    patch = _Patch(v, s)
    patch.complete(0)
    for _ in range(depth + 3):
        lvl = patch.levels()
        todo = sorted(
            (w for w in patch.nxt
             if lvl[w] <= depth and patch.faces_at[w] < v),
            key=lambda w: (int(lvl[w]), w),
        )
        if not todo:
            return patch, lvl
        for w in todo:
            if patch.faces_at[w] < v:
                patch.complete(w)
    raise AssertionError("face closing did not stabilize")


def gen_hyperbolic(v: int, s: int, depth: int) -> LayeredGraph:
    """Ball of the hyperbolic tiling with vertex degree v and s-gon faces.

    Requires (v - 2) * (s - 2) > 4.  The output contains levels 0..depth+1;
    the outermost level is complete as a vertex set but only carries its
    edges into level depth, so it can serve as a ghost layer.
    """
    if v < 3 or s < 3:
        raise BadParams(f"need v >= 3 and s >= 3, got v={v}, s={s}")
    if depth < 0:
        raise BadParams(f"depth must be >= 0, got {depth}")
    if (v - 2) * (s - 2) <= 4:
        raise NotHyperbolic(
            f"(v-2)*(s-2) = {(v - 2) * (s - 2)} <= 4: flat or spherical"
        )
    patch, lvl = _build_patch(v, s, depth)
    keep = lvl <= depth + 1
    adj = {}
    for a in range(len(patch.adj)):
        if not keep[a]:
            continue
        la = lvl[a]
        nb = [b for b in patch.adj[a] if keep[b]
              and not (la == depth + 1 and lvl[b] == depth + 1)]
        adj[a] = nb
    return _from_adjacency(adj, 0, family=f"hyperbolic(v={v},s={s})")


def hyperbolic_face_audit(v: int, s: int, depth: int) -> dict:
    """Independent face-by-face verification of the tiling construction.

    Walks the finished patch and re-checks, from the face list alone, that
    every face is an s-cycle of distinct vertices, every completed vertex has
    exactly v faces and degree v, every edge lies on at most two faces, and
    edges at completed vertices lie on exactly two.  Returns counters.
    """
    patch, lvl = _build_patch(v, s, depth)
    nv = len(patch.adj)
    complete = [patch.faces_at[w] == v for w in range(nv)]
    face_count = [0] * nv
    edge_faces: dict[tuple, int] = {}
    for face in patch.face_list:
        assert len(face) == s
        assert len(set(face)) == s
        for i in range(s):
            a, b = face[i], face[(i + 1) % s]
            assert b in patch.adj[a]
            key = (a, b) if a < b else (b, a)
            edge_faces[key] = edge_faces.get(key, 0) + 1
        for w in face:
            face_count[w] += 1
    n_edges = sum(len(nb) for nb in patch.adj) // 2
    assert len(edge_faces) == n_edges, "every edge must lie on a face"
    for key, cnt in edge_faces.items():
        assert cnt <= 2, f"edge {key} on {cnt} faces"
    for w in range(nv):
        assert len(set(patch.adj[w])) == len(patch.adj[w])
        assert face_count[w] == patch.faces_at[w]
        if complete[w]:
            assert len(patch.adj[w]) == v, \
                f"complete vertex {w} has degree {len(patch.adj[w])}"
            # both sides of every edge at a completed vertex are built
            for b in patch.adj[w]:
                key = (w, b) if w < b else (b, w)
                assert edge_faces[key] == 2
    n_complete = sum(complete)
    return {
        "vertices": len(patch.adj),
        "faces": len(patch.face_list),
        "complete_vertices": n_complete,
        "max_level": int(lvl.max()),
    }


# ---------------------------------------------------------------------------
# random regular graphs and expander-wired trees
# ---------------------------------------------------------------------------

def _regular_edges(n: int, k: int, rng: np.random.Generator) -> list:
    """Simple connected k-regular graph on range(n) via the configuration
    model; any self-loop, parallel edge, or disconnection restarts the draw
    from scratch."""
    if n < 2 or k < 1 or k >= n or (n * k) % 2 == 1:
        raise InfeasibleDegree(f"no simple {k}-regular graph on {n} vertices")
    stubs = np.repeat(np.arange(n, dtype=np.int64), k)
    for _ in range(REGULAR_RETRY_CAP):
        perm = rng.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        pairs = lo * n + hi
        if len(np.unique(pairs)) != len(pairs):
            continue
        adj = [[] for _ in range(n)]
        for x, y in zip(lo.tolist(), hi.tolist()):
            adj[x].append(y)
            adj[y].append(x)
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        q = deque([0])
        cnt = 1
        while q:
            x = q.popleft()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    cnt += 1
                    q.append(y)
        if cnt == n:
            return list(zip(lo.tolist(), hi.tolist()))
    raise RetryBudgetExceeded(
        f"no simple connected {k}-regular graph on {n} vertices in "
        f"{REGULAR_RETRY_CAP} attempts"
    )


def gen_random_regular(n: int, k: int, seed: int) -> LayeredGraph:
    """Uniform-ish simple connected k-regular graph, layered by BFS from 0."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    edges = _regular_edges(n, k, rng)
    adj = {i: [] for i in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    fam = f"random_regular(n={n},k={k},seed={seed},rng={RNG_ALGORITHM})"
    return _from_adjacency(adj, 0, family=fam)


@dataclass(frozen=True)
class ExpanderTreeParams:
    delta: int
    d: int
    depth: int
    seed: int
    layer_degrees: tuple | None = None

    def __post_init__(self):
        if self.delta < 6:
            raise BadParams(f"delta must be >= 6, got {self.delta}")
        if not 3 <= self.d < self.delta - 2:
            raise BadParams(
                f"need 3 <= d < delta - 2, got d={self.d}, delta={self.delta}"
            )
        if self.depth < 1:
            raise BadParams(f"depth must be >= 1, got {self.depth}")


def expander_layer_degree(level_size: int, d: int) -> int:
    """Default wiring degree for one level: min(d, largest feasible), with a
    single decrement when the stub count would be odd."""
    k = min(d, level_size - 1)
    if (level_size * k) % 2 == 1:
        k -= 1
    if k < 3 or k >= level_size or (level_size * k) % 2 == 1:
        raise InfeasibleDegree(
            f"no valid wiring degree <= {d} for a level of {level_size} vertices"
        )
    return k


def gen_expander_tree(params: ExpanderTreeParams) -> LayeredGraph:
    """Tree of degree delta with each level additionally wired as a random
    connected k_r-regular graph, one PCG64 child stream per level."""
    delta, d, depth, seed = params.delta, params.d, params.depth, params.seed
    tree = gen_tree(delta, depth)
    adj = {w: list(tree.neighbors(w)) for w in range(tree.vertex_count)}
    degrees = []
    for r in range(1, depth + 1):
        lv = tree.level_set(r)
        n_r = len(lv)
        if params.layer_degrees is not None:
            k_r = params.layer_degrees[r - 1]
            if not 3 <= k_r <= d:
                raise BadParams(f"layer degree {k_r} outside 3..{d}")
            if k_r >= n_r or (n_r * k_r) % 2 == 1:
                raise InfeasibleDegree(
                    f"no simple {k_r}-regular wiring on level of size {n_r}"
                )
        else:
            k_r = expander_layer_degree(n_r, d)
        degrees.append(k_r)
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,)))
        )
        base = lv.start
        for a, b in _regular_edges(n_r, k_r, rng):
            adj[base + a].append(base + b)
            adj[base + b].append(base + a)
    kstr = ".".join(str(k) for k in degrees)
    fam = (f"expander_tree(delta={delta},d={d},seed={seed},"
           f"k={kstr},rng={RNG_ALGORITHM})")
    return _from_adjacency(adj, 0, family=fam)
