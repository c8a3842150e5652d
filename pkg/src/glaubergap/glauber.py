"""Heat-bath Glauber dynamics: rates, exact generators, and simulation.

Two equivalent event conventions are used, matching the generator
(L f)(sigma) = sum_x c_x(sigma) [f(sigma^x) - f(sigma)]:

* jump form (``simulate_ct``): site x flips at rate
  c_x(sigma) = 1 / (1 + omega_x), omega_x = exp(2 beta sigma_x (F_x + h))
  with F_x the local field (interior neighbours plus ghost spins);
* resample form (couplings): every site rings at rate one and redraws its
  spin from the conditional law, which flips with the same c_x.

Exact-table machinery lives in :class:`HeatBathChain`; it works on any
:class:`~glaubergap.gibbs.GibbsTable`, including marginal tables, so the
single-level projected chain is the same code on a different table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import BadParams, TooLarge
from .graphs import BallSystem
from .gibbs import (BoundaryCondition, GibbsParams, GibbsTable, ghost_field,
                    marginal_measure)

ASSEMBLE_CAP = 14
OCCUPATION_CAP = 20
_RATE_CACHE_CAP = 20      # cache per-bit rate columns up to 2^20 * k floats
_SYM_CACHE_CAP = 22       # precompute window for symmetric coupling columns


# ---------------------------------------------------------------------------
# local-field form (simulation, no table required)
# ---------------------------------------------------------------------------

def local_fields(ball: BallSystem, bc: BoundaryCondition,
                 spins: np.ndarray) -> np.ndarray:
    """F_x = sum of neighbouring interior spins plus adjoining ghost spins."""
    sp = np.asarray(spins, dtype=np.float64)
    g = ball.interior
    out = np.zeros(ball.n)
    for x in range(ball.n):
        out[x] = sp[g.indices[g.indptr[x]:g.indptr[x + 1]]].sum()
    return out + ghost_field(ball, bc)


def flip_rates(params: GibbsParams, spins: np.ndarray,
               fields: np.ndarray) -> np.ndarray:
    """c_x = expit(-2 beta sigma_x (F_x + h)): the heat-bath flip rate."""
    sp = np.asarray(spins, dtype=np.float64)
    return expit(-2.0 * params.beta * sp * (np.asarray(fields) + params.h))

def plus_probabilities(params: GibbsParams, fields: np.ndarray) -> np.ndarray:
    """Conditional probability of +1 at each site given its field."""
    return expit(2.0 * params.beta * (np.asarray(fields) + params.h))


@dataclass
class Trajectory:
    """Continuous-time trajectory: events are actual spin flips."""

    family: str
    n: int
    bc_label: str
    beta: float
    h: float
    seed: int
    t_max: float
    initial: np.ndarray
    times: np.ndarray
    sites: np.ndarray
    spins: np.ndarray
    final: np.ndarray

    @property
    def n_events(self) -> int:
        return len(self.times)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({
                "type": "glauber-trajectory", "family": self.family,
                "n": self.n, "bc": self.bc_label, "beta": self.beta,
                "h": self.h, "seed": self.seed, "t_max": self.t_max,
                "initial": [int(s) for s in self.initial],
            }) + "\n")
            for t, x, s in zip(self.times, self.sites, self.spins):
                fh.write(json.dumps({"t": float(t), "site": int(x),
                                     "spin": int(s)}) + "\n")

    @staticmethod
    def from_jsonl(path) -> "Trajectory":
        with open(path) as fh:
            head = json.loads(fh.readline())
            if head.get("type") != "glauber-trajectory":
                raise BadParams(f"{path} is not a trajectory file")
            ts, xs, ss = [], [], []
            for line in fh:
                ev = json.loads(line)
                ts.append(ev["t"])
                xs.append(ev["site"])
                ss.append(ev["spin"])
        initial = np.asarray(head["initial"], dtype=np.int8)
        final = initial.copy()
        for x, s in zip(xs, ss):
            final[x] = s
        return Trajectory(family=head["family"], n=head["n"],
                          bc_label=head["bc"], beta=head["beta"],
                          h=head["h"], seed=head["seed"],
                          t_max=head["t_max"], initial=initial,
                          times=np.asarray(ts), sites=np.asarray(xs, dtype=np.int64),
                          spins=np.asarray(ss, dtype=np.int8), final=final)


def _as_spins(ball: BallSystem, sigma0) -> np.ndarray:
    if isinstance(sigma0, str):
        if sigma0 == "plus":
            return np.ones(ball.n, dtype=np.int8)
        if sigma0 == "minus":
            return -np.ones(ball.n, dtype=np.int8)
        raise BadParams(f"unknown initial state {sigma0!r}")
    if isinstance(sigma0, (int, np.integer)):
        return np.array([1 if (int(sigma0) >> j) & 1 else -1
                         for j in range(ball.n)], dtype=np.int8)
    arr = np.asarray(sigma0, dtype=np.int8)
    if arr.shape != (ball.n,) or not np.isin(arr, (-1, 1)).all():
        raise BadParams("initial state must be +-1 over the interior")
    return arr.copy()


def simulate_ct(ball: BallSystem, bc: BoundaryCondition, params: GibbsParams,
                sigma0, t_max: float, seed: int,
                max_events: int | None = None) -> Trajectory:
    """Exact continuous-time simulation (direct/Gillespie method).

    Deterministic given the seed: each event consumes one exponential for
    the waiting time and one uniform for the jump site, in that order.
    """
    if not (t_max > 0 and math.isfinite(t_max)):
        raise BadParams(f"t_max must be positive and finite, got {t_max}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    sp = _as_spins(ball, sigma0)
    initial = sp.copy()
    g = ball.interior
    gf = ghost_field(ball, bc)
    fld = local_fields(ball, bc, sp) - gf   # interior part; ghosts re-added
    rates = flip_rates(params, sp, fld + gf)
    ts, xs, ss = [], [], []
    t = 0.0
    cap = max_events if max_events is not None else (1 << 62)
    while len(ts) < cap:
        total = float(rates.sum())
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t >= t_max:
            break
        u = rng.random() * total
        x = int(np.searchsorted(np.cumsum(rates), u))
        if x >= ball.n:
            x = ball.n - 1
        sp[x] = -sp[x]
        ts.append(t)
        xs.append(x)
        ss.append(int(sp[x]))
        for w in g.indices[g.indptr[x]:g.indptr[x + 1]]:
            fld[w] += 2 * sp[x]
        nbrs = g.indices[g.indptr[x]:g.indptr[x + 1]]
        touch = np.concatenate([[x], nbrs])
        rates[touch] = flip_rates(
            params, sp[touch], fld[touch] + gf[touch])
    return Trajectory(family=g.family, n=ball.n, bc_label=bc.label,
                      beta=params.beta, h=params.h, seed=int(seed),
                      t_max=float(t_max), initial=initial,
                      times=np.asarray(ts),
                      sites=np.asarray(xs, dtype=np.int64),
                      spins=np.asarray(ss, dtype=np.int8), final=sp)


def occupation_distribution(traj: Trajectory, n: int | None = None
                            ) -> np.ndarray:
    """Time-weighted configuration distribution of a trajectory."""
    n = traj.n if n is None else n
    if n > OCCUPATION_CAP:
        raise TooLarge(f"occupation table for n={n} exceeds {OCCUPATION_CAP}")
    occ = np.zeros(1 << n)
    cfg = 0
    for j, s in enumerate(traj.initial):
        if s == 1:
            cfg |= 1 << j
    last = 0.0
    for t, x, s in zip(traj.times, traj.sites, traj.spins):
        occ[cfg] += t - last
        last = float(t)
        if s == 1:
            cfg |= 1 << int(x)
        else:
            cfg &= ~(1 << int(x))
    occ[cfg] += traj.t_max - last
    return occ / traj.t_max


# ---------------------------------------------------------------------------
# grand coupling and coupled pairs
# ---------------------------------------------------------------------------

def grand_coupling_step(ball: BallSystem, bc: BoundaryCondition,
                        params: GibbsParams, copies, x: int,
                        u: float) -> None:
    """One shared-randomness resample at site x applied to every copy in
    place.  Monotone: pointwise-ordered copies remain ordered because the
    plus-probability is increasing in the field."""
    g = ball.interior
    gfx = float(ghost_field(ball, bc)[x])
    nbrs = g.indices[g.indptr[x]:g.indptr[x + 1]]
    for sp in copies:
        f = float(sp[nbrs].sum()) + gfx
        p = float(expit(2.0 * params.beta * (f + params.h)))
        sp[x] = 1 if u < p else -1


def coupled_pair_simulate(ball: BallSystem, bc: BoundaryCondition,
                          params: GibbsParams, eta0, xi0, t_max: float,
                          seed: int, stop_on_coalesce: bool = True) -> dict:
    """Grand coupling run of two copies: rate-one clocks per site, shared
    site and threshold.  Returns the Hamming-distance trace."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    eta = _as_spins(ball, eta0)
    xi = _as_spins(ball, xi0)
    n = ball.n
    t = 0.0
    times = [0.0]
    hamming = [int(np.sum(eta != xi))]
    coalesce = 0.0 if hamming[0] == 0 else None
    while t < t_max:
        t += rng.exponential(1.0 / n)
        if t >= t_max:
            break
        x = int(rng.integers(n))
        u = float(rng.random())
        grand_coupling_step(ball, bc, params, (eta, xi), x, u)
        d = int(np.sum(eta != xi))
        times.append(t)
        hamming.append(d)
        if d == 0 and coalesce is None:
            coalesce = t
            if stop_on_coalesce:
                break
    return {"times": np.asarray(times), "hamming": np.asarray(hamming),
            "coalesce_time": coalesce, "eta": eta, "xi": xi,
            "t_max": float(t_max), "seed": int(seed)}


def discrepancy_sum(ball: BallSystem, bc: BoundaryCondition,
                    params: GibbsParams, spins: np.ndarray,
                    v: int) -> float:
    """Sum over sites of |p_x^eta - p_x^xi| for the pair eta, xi that agrees
    with ``spins`` everywhere except at v.  Only neighbours of v contribute.
    The path-coupling drift of that pair is this sum minus one."""
    g = ball.interior
    gf = ghost_field(ball, bc)
    sp = np.asarray(spins, dtype=np.int8).copy()
    total = 0.0
    for w in g.indices[g.indptr[v]:g.indptr[v + 1]]:
        w = int(w)
        nbrs = g.indices[g.indptr[w]:g.indptr[w + 1]]
        sp[v] = 1
        f_plus = float(sp[nbrs].sum()) + float(gf[w])
        sp[v] = -1
        f_minus = float(sp[nbrs].sum()) + float(gf[w])
        p_plus = float(expit(2.0 * params.beta * (f_plus + params.h)))
        p_minus = float(expit(2.0 * params.beta * (f_minus + params.h)))
        total += abs(p_plus - p_minus)
    return total


# ---------------------------------------------------------------------------
# exact chain on a weight table
# ---------------------------------------------------------------------------

def _flip_view(f: np.ndarray, j: int) -> np.ndarray:
    """f evaluated at sigma^j, via a strided reshape (no index array)."""
    return np.ascontiguousarray(
        f.reshape(-1, 2, 1 << j)[:, ::-1, :]).reshape(f.shape)


class HeatBathChain:
    """Heat-bath dynamics whose stationary law is a given weight table.

    Rates come straight from the table, so detailed balance is exact by
    construction: the rate of flipping bit j at configuration c is
    expit(lw[c ^ bit] - lw[c]).
    """

    def __init__(self, table: GibbsTable):
        if table.k < 1:
            raise BadParams("chain needs at least one free site")
        self.table = table
        self.k = table.k
        self._rate_cache = {} if table.k <= _RATE_CACHE_CAP else None

    def rate_column(self, j: int) -> np.ndarray:
        if self._rate_cache is not None and j in self._rate_cache:
            return self._rate_cache[j]
        lw = self.table.log_weights
        col = expit(_flip_view(lw, j) - lw)
        if self._rate_cache is not None:
            self._rate_cache[j] = col
        return col

    def total_rates(self) -> np.ndarray:
        out = np.zeros(1 << self.k)
        for j in range(self.k):
            out += self.rate_column(j)
        return out

    def generator_apply(self, f: np.ndarray) -> np.ndarray:
        """(L f)(c) = sum_j c_j(c) [f(c^j) - f(c)]."""
        f = np.asarray(f, dtype=np.float64)
        out = np.zeros_like(f)
        for j in range(self.k):
            out += self.rate_column(j) * (_flip_view(f, j) - f)
        return out

    def assemble_generator(self) -> sparse.csr_matrix:
        """Sparse generator matrix L (rows sum to zero)."""
        if self.k > ASSEMBLE_CAP:
            raise TooLarge(f"assembling 2^{self.k} states exceeds cap "
                           f"2^{ASSEMBLE_CAP}")
        n_cfg = 1 << self.k
        idx = np.arange(n_cfg, dtype=np.int64)
        rows, cols, data = [], [], []
        diag = np.zeros(n_cfg)
        for j in range(self.k):
            c = self.rate_column(j)
            rows.append(idx)
            cols.append(idx ^ (1 << j))
            data.append(c)
            diag -= c
        rows.append(idx)
        cols.append(idx)
        data.append(diag)
        return sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows),
                                    np.concatenate(cols))),
            shape=(n_cfg, n_cfg))

    def detailed_balance_residual(self) -> float:
        """max_j max_c |mu(c) c_j(c) - mu(c^j) c_j(c^j)|."""
        p = self.table.probabilities()
        worst = 0.0
        for j in range(self.k):
            c = self.rate_column(j)
            r = np.abs(p * c - _flip_view(p, j) * (1.0 - c))
            worst = max(worst, float(r.max()))
        return worst

    def dirichlet_form(self, f: np.ndarray, method: str = "rates") -> float:
        """Dirichlet energy of f, by either of the two dual formulas.

        ``rates``:    (1/2) sum_j mu( c_j * (grad_j f)^2 )
        ``variance``: sum_j mu( Var_j f ) with Var_j the single-site
                      conditional variance, c_j (1 - c_j) (grad_j f)^2.
        """
        f = np.asarray(f, dtype=np.float64)
        p = self.table.probabilities()
        total = 0.0
        for j in range(self.k):
            c = self.rate_column(j)
            d2 = (_flip_view(f, j) - f) ** 2
            if method == "rates":
                total += 0.5 * float(np.dot(p, c * d2))
            elif method == "variance":
                total += float(np.dot(p, c * (1.0 - c) * d2))
            else:
                raise BadParams(f"unknown dirichlet method {method!r}")
        return total

    def variance(self, f: np.ndarray) -> float:
        return self.table.variance(np.asarray(f, dtype=np.float64))

    def symmetric_operator(self) -> "SymmetricGenerator":
        return SymmetricGenerator(self)


class SymmetricGenerator:
    """A = D^{1/2} (-L) D^{-1/2}: symmetric PSD with kernel sqrt(mu).

    Off-diagonal entries are -sqrt(c_j(c) c_j(c^j)) = -1/(2 cosh(d/2)) with
    d the flip log-weight difference; the diagonal is the total exit rate.
    Per-bit coupling columns are precomputed in float64 up to 2^22 states
    and recomputed per product beyond that.
    """

    def __init__(self, chain: HeatBathChain):
        self.chain = chain
        self.k = chain.k
        self.n_states = 1 << chain.k
        self.shape = (self.n_states, self.n_states)
        self.dtype = np.float64
        self.diag = chain.total_rates()
        self._s_cols = None
        if self.k <= _SYM_CACHE_CAP:
            self._s_cols = [self._s_col(j) for j in range(self.k)]

    def _s_col(self, j: int) -> np.ndarray:
        lw = self.chain.table.log_weights
        d = _flip_view(lw, j) - lw
        return 0.5 / np.cosh(0.5 * d)

    def matvec(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64).reshape(-1)
        out = self.diag * f
        scratch = np.empty_like(f)
        for j in range(self.k):
            s = self._s_cols[j] if self._s_cols is not None \
                else self._s_col(j)
            # out -= s * f(sigma^j), multiplying through the strided
            # flip view directly so no contiguous copy is made
            w = 1 << j
            f3 = f.reshape(-1, 2, w)
            t3 = scratch.reshape(-1, 2, w)
            np.multiply(s.reshape(-1, 2, w), f3[:, ::-1, :], out=t3)
            out -= scratch
        return out

    def kernel_vector(self) -> np.ndarray:
        """sqrt(mu), normalized: the zero eigenvector."""
        v = np.exp(0.5 * (self.chain.table.log_weights
                          - self.chain.table.log_z))
        return v / np.linalg.norm(v)

    def residual_norm(self, v: np.ndarray, lam: float) -> float:
        """||A v - lam v|| / ||v|| in float64 with freshly computed rates."""
        f = np.asarray(v, dtype=np.float64).reshape(-1)
        out = self.diag * f
        for j in range(self.k):
            w = 1 << j
            out -= (self._s_col(j).reshape(-1, 2, w)
                    * f.reshape(-1, 2, w)[:, ::-1, :]).reshape(-1)
        return float(np.linalg.norm(out - lam * f) / np.linalg.norm(f))


def marginal_chain(ball: BallSystem, bc: BoundaryCondition,
                   params: GibbsParams, i: int, S, tau) -> HeatBathChain:
    """Heat-bath chain on the marginal law nu_S^tau: same machinery on the
    marginalized table."""
    return HeatBathChain(marginal_measure(ball, bc, params, i, S, tau))
