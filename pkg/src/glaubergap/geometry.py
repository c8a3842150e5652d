"""Level geometry: neighbor splits, growth, expansion, Peierls margins.

Conventions.  For a vertex x at level r, its neighbors split into the
descendants D_x (level r+1), the siblings S_x (level r), and the parents
P_x (level r-1).  A graph is growing with parameter g when every non-root
vertex satisfies |D_x| - |S_x| - |P_x| >= g.  For a subset C of a ball, the
downward edge boundary collects boundary edges whose inside endpoint sits
one level below the outside endpoint; the rest is the non-downward part.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (BadParams, BoundaryVertex, TooLarge, NotRegular,
                     NotGrowing, BadRegion)
from .graphs import LayeredGraph, BallSystem


@dataclass(frozen=True)
class NeighborSplit:
    down: tuple
    same: tuple
    up: tuple


def neighbor_split(graph: LayeredGraph, x: int) -> NeighborSplit:
    """Partition the neighbors of x by level.  The outermost level has no
    reliable descendant information, so it is rejected."""
    lx = int(graph.level[x])
    if lx == graph.radius:
        raise BoundaryVertex(
            f"vertex {x} lies on the outermost level {lx}; its descendant "
            "set is truncated"
        )
    nb = graph.neighbors(x)
    lv = graph.level[nb]
    return NeighborSplit(
        down=tuple(int(w) for w in nb[lv == lx + 1]),
        same=tuple(int(w) for w in nb[lv == lx]),
        up=tuple(int(w) for w in nb[lv == lx - 1]),
    )


def growth_parameter(graph: LayeredGraph, r_max: int | None = None) -> int:
    """min over x in levels 1..r_max of |D_x| - |S_x| - |P_x|.

    May be zero or negative; callers that need a growing graph must check.
    """
    if r_max is None:
        r_max = graph.radius - 1
    if not 1 <= r_max <= graph.radius - 1:
        raise BadParams(
            f"r_max must be in 1..{graph.radius - 1}, got {r_max}"
        )
    g = None
    for r in range(1, r_max + 1):
        for x in graph.level_set(r):
            sp = neighbor_split(graph, x)
            val = len(sp.down) - len(sp.same) - len(sp.up)
            if g is None or val < g:
                g = val
    return int(g)


def ball_growth_parameter(ball: BallSystem) -> int:
    """Growth parameter of a ball, counting ghost edges as descendants of
    the outermost interior level."""
    g = ball.interior
    gd = ball.ghost_degree()
    best = None
    for r in range(1, ball.m + 1):
        for x in g.level_set(r):
            nb = g.neighbors(x)
            lv = g.level[nb]
            down = int(np.sum(lv == r + 1)) + (int(gd[x]) if r == ball.m else 0)
            rest = int(np.sum(lv <= r))
            val = down - rest
            if best is None or val < best:
                best = val
    return int(best)


def hyperbolic_vertex_audit(graph: LayeredGraph, v: int, s: int,
                            depth: int | None = None) -> dict:
    """Check the per-vertex structure of a hyperbolic ball at levels
    1..depth: at least one descendant, at most two siblings, at most two
    parents; no siblings when s is even; siblings plus parents at most two
    when s is odd and at least 5.  Returns violation counters."""
    if depth is None:
        depth = graph.radius - 1
    if depth > graph.radius - 1:
        raise BadParams(f"depth {depth} exceeds audited range")
    checks = {"down>=1": 0, "same<=2": 0, "up<=2": 0,
              "even_s_no_same": 0, "odd_s_same+up<=2": 0}
    count = 0
    for r in range(1, depth + 1):
        for x in graph.level_set(r):
            sp = neighbor_split(graph, x)
            count += 1
            if len(sp.down) < 1:
                checks["down>=1"] += 1
            if len(sp.same) > 2:
                checks["same<=2"] += 1
            if len(sp.up) > 2:
                checks["up<=2"] += 1
            if s % 2 == 0 and s >= 4 and len(sp.same) != 0:
                checks["even_s_no_same"] += 1
            if s % 2 == 1 and s >= 5 and len(sp.same) + len(sp.up) > 2:
                checks["odd_s_same+up<=2"] += 1
    return {"vertices_checked": count,
            "violations": int(sum(checks.values())),
            "by_property": checks}


# ---------------------------------------------------------------------------
# expansion constants
# ---------------------------------------------------------------------------

_CHEEGER_CAP = 24


def _popcount(a: np.ndarray) -> np.ndarray:
    x = a.astype(np.uint32)
    x = x - ((x >> 1) & 0x55555555)
    x = (x & 0x33333333) + ((x >> 2) & 0x33333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F
    return ((x * 0x01010101) >> 24).astype(np.int64)


def cheeger_exact(graph: LayeredGraph) -> Fraction:
    """Edge expansion min_{0 < |S| <= n/2} |boundary(S)| / |S| by full
    subset scan; exact rational output.  Capped at 24 vertices."""
    n = graph.vertex_count
    if n > _CHEEGER_CAP:
        raise TooLarge(f"{n} vertices exceeds the exact cap {_CHEEGER_CAP}")
    if n < 2:
        raise BadParams("expansion needs at least two vertices")
    eu, ev = graph.edge_array()
    masks = np.arange(1 << n, dtype=np.uint32)
    cut = np.zeros(1 << n, dtype=np.int32)
    for u, v in zip(eu.tolist(), ev.tolist()):
        cut += ((masks >> u) ^ (masks >> v)).astype(np.int32) & 1
    size = _popcount(masks)
    ok = (size >= 1) & (size <= n // 2)
    ratio = np.where(ok, cut / np.maximum(size, 1), np.inf)
    best = int(np.argmin(ratio))
    return Fraction(int(cut[best]), int(size[best]))


_SPECTRAL_CAP = 4096


def cheeger_spectral_bound(graph: LayeredGraph) -> float:
    """Lower bound (k - lambda_2) / 2 on edge expansion of a k-regular
    graph via the dense adjacency spectrum."""
    n = graph.vertex_count
    if n > _SPECTRAL_CAP:
        raise TooLarge(f"{n} vertices exceeds the spectral cap {_SPECTRAL_CAP}")
    deg = np.diff(graph.indptr)
    if not (deg == deg[0]).all():
        raise NotRegular("spectral expansion bound needs a regular graph")
    k = int(deg[0])
    a = np.zeros((n, n))
    u, v = graph.edge_array()
    a[u, v] = 1.0
    a[v, u] = 1.0
    lam = np.linalg.eigvalsh(a)
    return float((k - lam[-2]) / 2.0)


# ---------------------------------------------------------------------------
# connected-set enumeration (canonical smallest-eligible-extension order)
# ---------------------------------------------------------------------------

_ENUM_CAP = 12


def _neighbor_masks(indptr, indices, universe=None):
    n = len(indptr) - 1
    if universe is None:
        sel = None
    else:
        sel = set(int(w) for w in universe)
    masks = []
    for x in range(n):
        m = 0
        for w in indices[indptr[x]:indptr[x + 1]]:
            if sel is None or int(w) in sel:
                m |= 1 << int(w)
        masks.append(m)
    return masks


def _count_rec(nbr, counts, p_max, S, nbrS, X, size):
    counts[size] += 1
    if size == p_max:
        return
    cand = nbrS & ~S & ~X
    while cand:
        b = cand & (-cand)
        cand ^= b
        w = b.bit_length() - 1
        _count_rec(nbr, counts, p_max, S | b, nbrS | nbr[w], X, size + 1)
        X |= b


def enumerate_connected_sets(graph: LayeredGraph, x: int, p_max: int) -> dict:
    """Count connected vertex sets containing x, by size, up to p_max.

    Each set is generated exactly once: candidates are scanned in ascending
    id order and a candidate, once expanded, is excluded from all later
    branches at that node.  Returns counts and the bounds (e*(max_deg+1))^p.
    """
    if not 1 <= p_max <= _ENUM_CAP:
        raise BadParams(f"p_max must be in 1..{_ENUM_CAP}, got {p_max}")
    nbr = _neighbor_masks(graph.indptr, graph.indices)
    counts = [0] * (p_max + 1)
    _count_rec(nbr, counts, p_max, 1 << x, nbr[x], 0, 1)
    delta = int(np.max(np.diff(graph.indptr)))
    bound = [(np.e * (delta + 1)) ** p for p in range(p_max + 1)]
    return {"x": int(x), "max_degree": delta,
            "counts": counts[1:], "bounds": bound[1:]}


def connected_subsets(nbr: list, seeds, p_max: int):
    """Yield every connected subset (as a bitmask) of size <= p_max that
    meets the seed set, exactly once."""
    out = []

    def rec(S, nbrS, X, size):
        out.append(S)
        if size == p_max:
            return
        cand = nbrS & ~S & ~X
        while cand:
            b = cand & (-cand)
            cand ^= b
            w = b.bit_length() - 1
            rec(S | b, nbrS | nbr[w], X, size + 1)
            X |= b

    done = 0
    for s in seeds:
        rec(1 << s, nbr[s], done, 1)
        done |= 1 << s
        for m in out:
            yield m
        out.clear()


# ---------------------------------------------------------------------------
# Peierls margins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeierlsMargin:
    """Edge-boundary bookkeeping for a subset C of a ball region U.

    ``down``/``not_down`` split the edge boundary by level direction;
    ``plus`` counts boundary edges whose outside endpoint is free or
    plus-held (inside U or a ghost), ``minus`` those held at minus
    (interior outside U).  ``margin`` is min(down - not_down, plus - minus).
    """

    size: int
    down: int
    not_down: int
    plus: int
    minus: int

    @property
    def boundary(self) -> int:
        return self.down + self.not_down

    @property
    def margin(self) -> int:
        return min(self.down - self.not_down, self.plus - self.minus)


def region_vertices(ball: BallSystem, i: int, S) -> tuple:
    """U = (levels >= i+1) union S with S inside level i; validated."""
    g = ball.interior
    if not 0 <= i <= ball.m:
        raise BadRegion(f"level index {i} outside 0..{ball.m}")
    li = set(g.level_set(i))
    s = [int(w) for w in S]
    if len(set(s)) != len(s) or not set(s) <= li:
        raise BadRegion("S must be a subset of level i without repeats")
    upper = list(range(int(g.level_offsets[i + 1]), g.vertex_count))
    return tuple(sorted(s) + upper)


def subset_margin(ball: BallSystem, U: set, c_vertices) -> PeierlsMargin:
    """Classify every boundary edge of C (interior and ghost edges both)."""
    g = ball.interior
    cset = set(int(w) for w in c_vertices)
    down = not_down = plus = minus = 0
    gd = ball.ghost_degree()
    for x in cset:
        lx = int(g.level[x])
        for w in g.neighbors(x):
            w = int(w)
            if w in cset:
                continue
            if int(g.level[w]) == lx + 1:
                down += 1
            else:
                not_down += 1
            if w in U:
                plus += 1
            else:
                minus += 1
        if lx == ball.m and gd[x]:
            down += int(gd[x])
            plus += int(gd[x])
    return PeierlsMargin(size=len(cset), down=down, not_down=not_down,
                         plus=plus, minus=minus)


def _level_split_margins(ball: BallSystem, U: set, cset: set):
    """Margins of each level slice C_j, for the telescoping identity."""
    g = ball.interior
    by_level: dict[int, list] = {}
    for x in cset:
        by_level.setdefault(int(g.level[x]), []).append(x)
    return {j: subset_margin(ball, U, xs) for j, xs in by_level.items()}


def peierls_audit(ball: BallSystem, i: int, S, size_cap: int,
                  seeds=None) -> dict:
    """Exhaustive margin audit over connected subsets C of U = F_{i+1} u S.

    Verifies for every C: down - not_down >= g|C|, plus - minus >= g|C|,
    and the level-telescoping identity
    down(C) - not_down(C) = sum_j [down(C_j) - not_down(C_j)].
    Requires a strictly positive ball growth parameter.
    """
    if size_cap > 10:
        raise BadParams(f"size_cap {size_cap} exceeds audit cap 10")
    growth = ball_growth_parameter(ball)
    if growth <= 0:
        raise NotGrowing(f"ball growth parameter {growth} <= 0")
    region = region_vertices(ball, i, S)
    if 0 in region:
        raise BadRegion("region may not contain the root")
    uset = set(region)
    g = ball.interior
    nbr = _neighbor_masks(g.indptr, g.indices, universe=region)
    seed_list = list(region) if seeds is None else [int(w) for w in seeds]
    if not set(seed_list) <= uset:
        raise BadRegion("seeds must lie inside the region")
    worst = None
    worst_set = None
    checked = 0
    violations = 0
    for mask in connected_subsets(nbr, seed_list, size_cap):
        cs = _mask_vertices(mask)
        m = subset_margin(ball, uset, cs)
        slack = m.margin - growth * m.size
        tele = sum(lm.down - lm.not_down
                   for lm in _level_split_margins(ball, uset, set(cs)).values())
        assert tele == m.down - m.not_down, "telescoping identity failed"
        checked += 1
        if slack < 0:
            violations += 1
        if worst is None or slack < worst:
            worst = slack
            worst_set = cs
    return {"growth": growth, "checked": checked, "violations": violations,
            "worst_slack": worst, "worst_set": worst_set}


def _mask_vertices(mask: int) -> tuple:
    out = []
    while mask:
        b = mask & (-mask)
        mask ^= b
        out.append(b.bit_length() - 1)
    return tuple(out)
