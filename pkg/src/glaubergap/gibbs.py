"""Exact Ising measures on finite balls with boundary conditions.

A configuration on a region of k vertices is an integer in [0, 2^k); bit j
holds the spin of ``region[j]`` with bit 1 meaning +1.  Regions are always
sorted ascending, and because vertex ids are BFS-ordered, the vertices of
levels >= i+1 occupy the top bits of a region of the form
(S subset of level i) + (all of levels >= i+1).

Weights are kept in the log domain throughout: ``log_weights[c]`` is the
energy exponent E(c) = beta * (sum of sigma_u sigma_v over edges meeting the
region + boundary terms + h * sum of region spins), and the measure is
exp(E - log_z).  Terms not meeting the region are dropped; they cancel in
every normalized quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadParams, BadRegion, TooLarge, NotGrowing
from .graphs import BallSystem
from .geometry import (region_vertices, ball_growth_parameter,
                       connected_subsets, _neighbor_masks, _mask_vertices,
                       _popcount)

TABLE_CAP = 24
MARGINAL_CAP = 20
_CHUNK = 1 << 20


@dataclass(frozen=True)
class BoundaryCondition:
    """Ghost-layer spins: free (no ghosts), all plus, all minus, or an
    explicit per-ghost assignment."""

    kind: str
    spins: tuple = ()

    @staticmethod
    def free() -> "BoundaryCondition":
        return BoundaryCondition("free")

    @staticmethod
    def plus() -> "BoundaryCondition":
        return BoundaryCondition("plus")

    @staticmethod
    def minus() -> "BoundaryCondition":
        return BoundaryCondition("minus")

    @staticmethod
    def fixed(spins) -> "BoundaryCondition":
        sp = tuple(int(s) for s in spins)
        if any(s not in (-1, 1) for s in sp):
            raise BadParams("fixed boundary spins must be +-1")
        return BoundaryCondition("fixed", sp)

    def ghost_values(self, ball: BallSystem) -> np.ndarray | None:
        if self.kind == "free":
            return None
        if self.kind == "plus":
            return np.ones(ball.ghost_count, dtype=np.int8)
        if self.kind == "minus":
            return -np.ones(ball.ghost_count, dtype=np.int8)
        if self.kind == "fixed":
            if len(self.spins) != ball.ghost_count:
                raise BadParams(
                    f"fixed boundary has {len(self.spins)} spins for "
                    f"{ball.ghost_count} ghosts"
                )
            return np.asarray(self.spins, dtype=np.int8)
        raise BadParams(f"unknown boundary kind {self.kind!r}")

    @property
    def label(self) -> str:
        return self.kind


@dataclass(frozen=True)
class GibbsParams:
    beta: float
    h: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise BadParams(f"beta must be finite and >= 0, got {self.beta}")
        if not math.isfinite(self.h):
            raise BadParams(f"h must be finite, got {self.h}")


def spins_from_config(config: int, k: int) -> np.ndarray:
    return np.array([1 if (config >> j) & 1 else -1 for j in range(k)],
                    dtype=np.int8)


def config_from_spins(spins) -> int:
    c = 0
    for j, s in enumerate(spins):
        if int(s) == 1:
            c |= 1 << j
        elif int(s) != -1:
            raise BadParams("spins must be +-1")
    return c


def ghost_field(ball: BallSystem, bc: BoundaryCondition) -> np.ndarray:
    """Per-interior-vertex sum of adjoining ghost spins (zero for free)."""
    b = np.zeros(ball.n, dtype=np.float64)
    tau = bc.ghost_values(ball)
    if tau is not None:
        gu, gg = ball.ghost_edge_arrays()
        np.add.at(b, gu, tau[gg].astype(np.float64))
    return b


def _logsumexp_stream(arr: np.ndarray) -> float:
    m = -np.inf
    for lo in range(0, len(arr), _CHUNK):
        cm = float(np.max(arr[lo:lo + _CHUNK]))
        if cm > m:
            m = cm
    acc = 0.0
    for lo in range(0, len(arr), _CHUNK):
        acc += float(np.sum(np.exp(arr[lo:lo + _CHUNK] - m)))
    return m + math.log(acc)


def _normalize_frozen(ball: BallSystem, frozen) -> np.ndarray:
    """Frozen interior spins as an int8 array; 0 marks unassigned."""
    arr = np.zeros(ball.n, dtype=np.int8)
    if frozen is None:
        return arr
    if isinstance(frozen, dict):
        for v, s in frozen.items():
            if int(s) not in (-1, 1):
                raise BadParams(f"frozen spin at {v} must be +-1")
            arr[int(v)] = int(s)
    else:
        a = np.asarray(frozen, dtype=np.int8)
        if a.shape != (ball.n,):
            raise BadParams("frozen array must cover the interior")
        arr[:] = a
    return arr


@dataclass(frozen=True)
class GibbsTable:
    """Log-domain weight table of an Ising measure on a region."""

    ball: BallSystem
    bc: BoundaryCondition
    params: GibbsParams
    region: tuple
    frozen: np.ndarray | None
    log_weights: np.ndarray
    log_z: float

    @property
    def k(self) -> int:
        return len(self.region)

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_z)

    def expectation(self, f: np.ndarray) -> float:
        return float(np.dot(self.probabilities(), f))

    def variance(self, f: np.ndarray) -> float:
        p = self.probabilities()
        mu = float(np.dot(p, f))
        return float(np.dot(p, (f - mu) ** 2))

    def covariance(self, f: np.ndarray, g: np.ndarray) -> float:
        p = self.probabilities()
        mf, mg = float(np.dot(p, f)), float(np.dot(p, g))
        return float(np.dot(p, (f - mf) * (g - mg)))

    def bit_of(self, vertex: int) -> int:
        try:
            return self.region.index(int(vertex))
        except ValueError:
            raise BadRegion(f"vertex {vertex} not in region") from None

    def spin_probability(self, vertex: int, value: int = 1) -> float:
        j = self.bit_of(vertex)
        idx = np.arange(1 << self.k, dtype=np.uint32)
        want = 1 if value == 1 else 0
        sel = ((idx >> j) & 1) == want
        return float(np.exp(_logsumexp_stream(self.log_weights[sel])
                            - self.log_z))

    def event_probability(self, assignment: dict) -> float:
        """Probability that every vertex in the mapping carries its spin."""
        idx = self._subcube(assignment)
        return float(np.exp(_logsumexp_stream(self.log_weights[idx])
                            - self.log_z))

    def _subcube(self, assignment: dict) -> np.ndarray:
        base = 0
        fixed_bits = []
        for v, s in assignment.items():
            j = self.bit_of(v)
            fixed_bits.append(j)
            if int(s) == 1:
                base |= 1 << j
            elif int(s) != -1:
                raise BadParams("assignment spins must be +-1")
        free = [j for j in range(self.k) if j not in set(fixed_bits)]
        idx = np.array([base], dtype=np.int64)
        for j in free:
            idx = np.concatenate([idx, idx | (1 << j)])
        return idx

    def restrict(self, assignment: dict) -> "GibbsTable":
        """Condition by slicing this table (no re-derivation of energies).

        The subcube fold visits free bits in ascending order, so the gathered
        entries already sit in compressed-configuration order.
        """
        fixed = set(self.bit_of(v) for v in assignment)
        sub_region = tuple(v for j, v in enumerate(self.region)
                           if j not in fixed)
        idx = self._subcube(assignment)
        lw = self.log_weights[idx]
        frozen = np.zeros(self.ball.n, dtype=np.int8) if self.frozen is None \
            else self.frozen.copy()
        for v, s in assignment.items():
            frozen[int(v)] = int(s)
        return GibbsTable(ball=self.ball, bc=self.bc, params=self.params,
                          region=sub_region, frozen=frozen, log_weights=lw,
                          log_z=_logsumexp_stream(lw))

    def marginal_onto(self, sub) -> "GibbsTable":
        """Marginal table on a sub-region (log-sum-exp over the rest)."""
        sub = tuple(int(v) for v in sub)
        bits = [self.bit_of(v) for v in sub]
        if len(sub) > MARGINAL_CAP:
            raise TooLarge(f"marginal over {len(sub)} sites exceeds cap "
                           f"{MARGINAL_CAP}")
        if bits == list(range(len(sub))):
            resh = self.log_weights.reshape(1 << (self.k - len(sub)),
                                            1 << len(sub))
            lw = _logsumexp_axis0(resh)
        else:
            idx = np.arange(1 << self.k, dtype=np.int64)
            tgt = np.zeros(1 << self.k, dtype=np.int64)
            for jj, j in enumerate(bits):
                tgt |= ((idx >> j) & 1) << jj
            order = np.argsort(tgt, kind="stable")
            lw_sorted = self.log_weights[order].reshape(
                1 << len(sub), 1 << (self.k - len(sub)))
            lw = _logsumexp_axis1(lw_sorted)
        return GibbsTable(ball=self.ball, bc=self.bc, params=self.params,
                          region=sub, frozen=self.frozen, log_weights=lw,
                          log_z=_logsumexp_stream(lw))


def _logsumexp_axis0(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=0)
    return m + np.log(np.exp(a - m).sum(axis=0))


def _logsumexp_axis1(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


# ---------------------------------------------------------------------------
# table construction (single code path for all conditioned measures)
# ---------------------------------------------------------------------------

def _build_table(ball: BallSystem, bc: BoundaryCondition, params: GibbsParams,
                 region: tuple, frozen_arr: np.ndarray) -> GibbsTable:
    k = len(region)
    if k > TABLE_CAP:
        raise TooLarge(f"region of {k} sites exceeds exact cap {TABLE_CAP}")
    if list(region) != sorted(set(int(v) for v in region)):
        raise BadRegion("region must be sorted and duplicate-free")
    pos = {int(v): j for j, v in enumerate(region)}
    gf = ghost_field(ball, bc)
    fld = np.full(k, params.h, dtype=np.float64)
    pairs = []
    for j, x in enumerate(region):
        fld[j] += gf[x]
        for w in ball.interior.neighbors(x):
            w = int(w)
            jw = pos.get(w)
            if jw is None:
                s = int(frozen_arr[w])
                if s == 0:
                    raise BadRegion(
                        f"vertex {w} borders the region but has no frozen spin"
                    )
                fld[j] += s
            elif jw > j:
                pairs.append((j, jw))
    n_cfg = 1 << k
    lw = np.empty(n_cfg, dtype=np.float64)
    for lo in range(0, n_cfg, _CHUNK):
        hi = min(lo + _CHUNK, n_cfg)
        idx = np.arange(lo, hi, dtype=np.uint32)
        sp = {}

        def spin(j):
            if j not in sp:
                sp[j] = (((idx >> j) & 1).astype(np.int8) << 1) - 1
            return sp[j]

        acc = np.zeros(hi - lo, dtype=np.float64)
        for a, b in pairs:
            acc += spin(a) * spin(b)
        for j in range(k):
            if fld[j] != 0.0:
                acc += fld[j] * spin(j)
        lw[lo:hi] = params.beta * acc
    frozen = None if int(np.count_nonzero(frozen_arr)) == 0 else frozen_arr
    return GibbsTable(ball=ball, bc=bc, params=params, region=tuple(region),
                      frozen=frozen, log_weights=lw,
                      log_z=_logsumexp_stream(lw))


def exact_gibbs(ball: BallSystem, bc: BoundaryCondition,
                params: GibbsParams) -> GibbsTable:
    """Full Gibbs table over all interior vertices."""
    region = tuple(range(ball.n))
    return _build_table(ball, bc, params, region,
                        np.zeros(ball.n, dtype=np.int8))


def conditional_measure(ball: BallSystem, bc: BoundaryCondition,
                        params: GibbsParams, region, frozen) -> GibbsTable:
    """Measure on ``region`` given frozen interior spins elsewhere.

    ``frozen`` (dict or full array) must assign a spin to every interior
    vertex adjacent to the region; farther vertices are irrelevant and may
    stay unassigned.
    """
    region = tuple(sorted(int(v) for v in region))
    if any(not 0 <= v < ball.n for v in region):
        raise BadRegion("region vertices must be interior")
    arr = _normalize_frozen(ball, frozen)
    if any(arr[v] != 0 for v in region):
        raise BadRegion("frozen spins overlap the free region")
    return _build_table(ball, bc, params, region, arr)


def hamiltonian(ball: BallSystem, bc: BoundaryCondition, params: GibbsParams,
                config: int) -> float:
    """Energy exponent of a full interior configuration: beta times
    (interior edge sum + ghost edge sum + h * magnetization)."""
    n = ball.n
    if not 0 <= config < (1 << n):
        raise BadParams("configuration out of range")
    sp = spins_from_config(config, n).astype(np.float64)
    eu, ev = ball.interior.edge_array()
    e = float(np.dot(sp[eu], sp[ev]))
    e += float(np.dot(ghost_field(ball, bc), sp))
    e += params.h * float(sp.sum())
    return params.beta * e


# ---------------------------------------------------------------------------
# level-region measures
# ---------------------------------------------------------------------------

def upper_levels(ball: BallSystem, i: int) -> tuple:
    """Vertices of levels >= i (the region the martingale scan conditions)."""
    if not 0 <= i <= ball.m + 1:
        raise BadRegion(f"level {i} outside 0..{ball.m + 1}")
    return tuple(range(int(ball.interior.level_offsets[i]), ball.n))


def marginal_measure(ball: BallSystem, bc: BoundaryCondition,
                     params: GibbsParams, i: int, S, tau) -> GibbsTable:
    """nu_S^tau: marginal on S (subset of level i) of the measure on
    S + levels >= i+1 with frozen spins tau on the rest of the interior."""
    region = region_vertices(ball, i, S)
    s_sorted = tuple(sorted(int(v) for v in S))
    arr = _normalize_frozen(ball, tau)
    for v in region:
        arr[v] = 0
    table = _build_table(ball, bc, params, region, arr)
    return table.marginal_onto(s_sorted)


def correlation_decay_profile(ball: BallSystem, bc: BoundaryCondition,
                              params: GibbsParams, i: int, S, x: int,
                              ys, tau) -> list:
    """Boundary-flip sensitivity |mu_U^tau(sigma_x = +) - mu_U^{tau^y}(...)|
    for probe vertices y at increasing distance from x.

    U = S + levels >= i+1.  Distances are measured through the free region
    (the medium the influence must cross): the shortest path from x to y
    whose interior vertices all lie in U, or -1 when no such path exists,
    in which case the flip provably cannot move the marginal at x.  Each
    record carries that distance, the two probabilities, and their
    difference; when tau_y = +1 the difference equals the monotone gap
    p(y:+) - p(y:-) and must be nonnegative.
    """
    region = region_vertices(ball, i, S)
    if int(x) not in set(int(v) for v in S):
        raise BadRegion("probe x must lie in S")
    arr = _normalize_frozen(ball, tau)
    for v in region:
        arr[v] = 0
    dist = _region_distance(ball, region, int(x))
    out = []
    for y in ys:
        y = int(y)
        if arr[y] == 0:
            raise BadRegion(f"flip vertex {y} must carry a frozen spin")
        base = _build_table(ball, bc, params, region, arr)
        flipped_arr = arr.copy()
        flipped_arr[y] = -arr[y]
        flip = _build_table(ball, bc, params, region, flipped_arr)
        p0 = base.spin_probability(x, 1)
        p1 = flip.spin_probability(x, 1)
        signed = p0 - p1 if arr[y] == 1 else p1 - p0
        out.append({"y": y, "distance": int(dist[y]),
                    "p_plus": p0, "p_flipped": p1,
                    "difference": abs(p0 - p1), "monotone_gap": signed})
    return out


def _region_distance(ball: BallSystem, region, x: int) -> np.ndarray:
    """BFS distance from x routed through region vertices only; vertices
    outside the region get the distance of their nearest region neighbour
    plus one (they may end a path but not relay it); -1 if unreachable."""
    from collections import deque
    g = ball.interior
    inside = np.zeros(ball.n, dtype=bool)
    inside[list(region)] = True
    d = np.full(ball.n, -1, dtype=np.int64)
    d[x] = 0
    q = deque([x])
    while q:
        a = q.popleft()
        for b in g.neighbors(a):
            b = int(b)
            if d[b] < 0:
                d[b] = d[a] + 1
                if inside[b]:
                    q.append(b)
    return d


# ---------------------------------------------------------------------------
# negative components and the flip audit
# ---------------------------------------------------------------------------

def negative_component(ball: BallSystem, table_region, config: int,
                       x: int) -> frozenset:
    """Maximal connected set of minus spins through the region containing x;
    empty when x itself is plus."""
    pos = {int(v): j for j, v in enumerate(table_region)}
    if int(x) not in pos:
        raise BadRegion("x must lie in the region")
    if (config >> pos[int(x)]) & 1:
        return frozenset()
    return _minus_bfs(ball, pos, config, [int(x)], {int(x)})


def anchored_negative_component(ball: BallSystem, table_region, config: int,
                                y: int) -> frozenset:
    """Connected set through minus region spins grown from the anchor y;
    the anchor joins regardless of any spin it may carry."""
    pos = {int(v): j for j, v in enumerate(table_region)}
    return _minus_bfs(ball, pos, config, [int(y)], {int(y)})


def _minus_bfs(ball, pos, config, queue, seen):
    g = ball.interior
    i = 0
    while i < len(queue):
        a = queue[i]
        i += 1
        for b in g.neighbors(a):
            b = int(b)
            j = pos.get(b)
            if b in seen or j is None:
                continue
            if not (config >> j) & 1:
                seen.add(b)
                queue.append(b)
    return frozenset(seen)


CLAIM_AUDIT_CAP = 8


def claim32_audit(ball: BallSystem, params: GibbsParams, i: int, S,
                  size_cap: int) -> dict:
    """Exact check of the flip bound: under the measure on U = S + upper
    levels with minus spins frozen outside U and plus ghosts, every
    connected C in U satisfies
    P(sigma_C = -, sigma on boundary(C) cap U = +) <= exp(-2 g beta |C|).
    """
    if size_cap > CLAIM_AUDIT_CAP:
        raise BadParams(f"size_cap {size_cap} exceeds cap {CLAIM_AUDIT_CAP}")
    growth = ball_growth_parameter(ball)
    if growth <= 0:
        raise NotGrowing(f"ball growth parameter {growth} <= 0")
    region = region_vertices(ball, i, S)
    uset = set(region)
    frozen = {v: -1 for v in range(ball.n) if v not in uset}
    table = conditional_measure(ball, BoundaryCondition.plus(), params,
                                region, frozen)
    g = ball.interior
    nbr = _neighbor_masks(g.indptr, g.indices, universe=region)
    worst = None
    worst_set = None
    checked = violations = 0
    for mask in connected_subsets(nbr, list(region), size_cap):
        c_vs = _mask_vertices(mask)
        event = {v: -1 for v in c_vs}
        for v in c_vs:
            for w in g.neighbors(v):
                w = int(w)
                if w in uset and w not in event:
                    event[w] = 1
        logp = math.log(max(table.event_probability(event), 1e-300))
        ratio = logp + 2.0 * growth * params.beta * len(c_vs)
        checked += 1
        if ratio > 1e-9:
            violations += 1
        if worst is None or ratio > worst:
            worst = ratio
            worst_set = c_vs
    return {"growth": growth, "checked": checked, "violations": violations,
            "worst_log_ratio": worst, "worst_set": worst_set}


def density_ratio_checks(ball: BallSystem, params: GibbsParams, i: int,
                         x: int, tau) -> dict:
    """Mean and sup of the density of the upper-level measure with tau_x
    flipped to + against the one with tau_x flipped to -.

    The mean under the minus-rooted measure is exactly one; the sup tracks
    how far the boundary flip can tilt any single configuration.
    """
    g = ball.interior
    if int(g.level[x]) != i:
        raise BadRegion(f"vertex {x} is not on level {i}")
    region = upper_levels(ball, i + 1)
    arr = _normalize_frozen(ball, tau)
    for v in region:
        arr[v] = 0
    arr_p, arr_m = arr.copy(), arr.copy()
    arr_p[int(x)] = 1
    arr_m[int(x)] = -1
    bc = BoundaryCondition.plus()
    tab_p = _build_table(ball, bc, params, region, arr_p)
    tab_m = _build_table(ball, bc, params, region, arr_m)
    log_ratio = (tab_p.log_weights - tab_p.log_z) \
        - (tab_m.log_weights - tab_m.log_z)
    mean = float(np.dot(tab_m.probabilities(), np.exp(log_ratio)))
    return {"mean": mean, "sup": float(np.exp(log_ratio.max())),
            "x": int(x), "level": i}


def magnetization_distribution(ball: BallSystem, bc: BoundaryCondition,
                               params: GibbsParams) -> dict:
    """Exact law of the total magnetization m = (#plus) - (#minus)."""
    table = exact_gibbs(ball, bc, params)
    n = ball.n
    pop = _popcount(np.arange(1 << n, dtype=np.uint32))
    probs = np.zeros(n + 1)
    np.add.at(probs, pop, table.probabilities())
    return {2 * k - n: float(probs[k]) for k in range(n + 1)}
