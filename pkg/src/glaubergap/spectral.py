"""Spectral gap, mixing time, and the bounds connecting them.

The spectral gap of the heat-bath generator is computed on the symmetrized
operator A = D^{1/2} (-L) D^{-1/2} (kernel sqrt(mu)), densely up to 2^12
states and iteratively up to 2^24.  Total-variation mixing reuses one dense
eigendecomposition across a bisection in t, which is exactly e^{tL} row by
row.  The remaining entry points turn test functions, couplings, and
martingale decompositions into certified upper and lower bounds on the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, lobpcg

from .errors import (BadParams, EvenN, NoConvergence, PoorFit, TooLarge,
                     ZeroVariance)
from .graphs import BallSystem
from .gibbs import BoundaryCondition, GibbsParams, GibbsTable, exact_gibbs
from .geometry import cheeger_exact, _popcount
from .glauber import (HeatBathChain, Trajectory, _flip_view, simulate_ct,
                      discrepancy_sum)

DENSE_CAP = 12
ITER_CAP = 24
MIXING_CAP = 12
CONTRACTION_EXACT_CAP = 20
MARTINGALE_CAP = 20


def _meta(table: GibbsTable) -> dict:
    return {"family": table.ball.interior.family, "n": table.ball.n,
            "k": table.k, "bc": table.bc.label, "beta": table.params.beta,
            "h": table.params.h}


@dataclass(frozen=True)
class GapReport:
    gap: float
    method: str
    residual: float
    converged: bool
    iterations: int | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MixingReport:
    tau1: float
    epsilon: float
    gap: float
    product: float            # tau1 * gap (>= about 1 when gap is tight)
    bracket: tuple
    rel_tol: float
    evaluations: int
    method: str
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ContractionReport:
    alpha: float              # contraction rate; gap >= alpha when > 0
    drift_max: float          # worst pair drift = -alpha
    worst_site: int
    contracting: bool
    mode: str
    n_checked: int
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# exact spectral gap
# ---------------------------------------------------------------------------

def _dense_symmetric(chain: HeatBathChain) -> np.ndarray:
    k = chain.k
    n_cfg = 1 << k
    sym = chain.symmetric_operator()
    a = np.zeros((n_cfg, n_cfg))
    idx = np.arange(n_cfg)
    a[idx, idx] = sym.diag
    for j in range(k):
        a[idx, idx ^ (1 << j)] = -sym._s_col(j)
    return a


def exact_gap(chain: HeatBathChain, method: str = "auto") -> GapReport:
    """Smallest nonzero eigenvalue of -L.

    ``dense`` diagonalizes the symmetrized operator (up to 2^12 states);
    ``iterative`` runs constrained LOBPCG with an eigsh fallback (up to
    2^24); ``auto`` picks by size.  Every result carries a float64
    residual check on the returned eigenpair.
    """
    k = chain.k
    if method == "auto":
        method = "dense" if k <= DENSE_CAP else "iterative"
    if method == "dense":
        if k > DENSE_CAP:
            raise TooLarge(f"dense gap for 2^{k} states exceeds 2^{DENSE_CAP}")
        a = _dense_symmetric(chain)
        w, v = np.linalg.eigh(a)
        if abs(w[0]) > 1e-8:
            raise NoConvergence(f"kernel eigenvalue off zero: {w[0]}")
        sym = chain.symmetric_operator()
        res = sym.residual_norm(v[:, 1], float(w[1]))
        return GapReport(gap=float(w[1]), method="dense", residual=res,
                         converged=True, meta=_meta(chain.table))
    if method != "iterative":
        raise BadParams(f"unknown gap method {method!r}")
    if k > ITER_CAP:
        raise TooLarge(f"iterative gap for 2^{k} states exceeds 2^{ITER_CAP}")
    return _iterative_gap(chain)


def _seed_block(sym, k: int) -> np.ndarray:
    """Start block for the iterative solvers: the magnetization mode and
    its sign (the free-boundary bottleneck), both conjugated by sqrt(mu)
    and orthogonalized against the kernel, plus one random vector."""
    kv = sym.kernel_vector()
    pop = _popcount(np.arange(1 << k, dtype=np.uint32)).astype(np.float64)
    m = 2.0 * pop - k
    rng = np.random.default_rng(0)
    cols = []
    for x in (kv * m, kv * np.sign(m + 0.5), rng.standard_normal(1 << k)):
        x = x - kv * float(np.dot(kv, x))
        nrm = float(np.linalg.norm(x))
        if nrm < 1e-12:
            x = rng.standard_normal(1 << k)
            x -= kv * float(np.dot(kv, x))
            nrm = float(np.linalg.norm(x))
        cols.append(x / nrm)
    return np.column_stack(cols)


def _iterative_gap(chain: HeatBathChain) -> GapReport:
    sym = chain.symmetric_operator()
    n_cfg = sym.n_states
    tol_abs = 1e-8 * max(1.0, float(sym.diag.max()))
    kv = sym.kernel_vector().reshape(-1, 1)
    block = _seed_block(sym, chain.k)
    x0 = block[:, 0]
    op = LinearOperator((n_cfg, n_cfg), matvec=sym.matvec,
                        dtype=np.float64)
    inv_diag = 1.0 / sym.diag
    precond = LinearOperator((n_cfg, n_cfg),
                             matvec=lambda f: inv_diag * f.reshape(-1),
                             dtype=np.float64)
    lam = vec = None
    iters = None
    try:
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w, v = lobpcg(op, block, M=precond, Y=kv, largest=False,
                          tol=1e-10, maxiter=1500)
        order = np.argsort(w)
        lam, vec = float(w[order[0]]), v[:, order[0]]
    except Exception:
        lam = None
    if lam is not None:
        res = sym.residual_norm(vec, lam)
        if res <= tol_abs:
            return GapReport(gap=lam, method="lobpcg", residual=res,
                             converged=True, iterations=iters,
                             meta=_meta(chain.table))
    # rank-one deflation shift pushes the kernel above the spectrum
    shift = 4.0 * float(sym.diag.max())
    kflat = kv.reshape(-1)

    def shifted(f):
        return sym.matvec(f) + shift * kflat * float(np.dot(kflat, f))

    op2 = LinearOperator((n_cfg, n_cfg), matvec=shifted, dtype=np.float64)
    try:
        w, v = eigsh(op2, k=1, which="SA", v0=x0, tol=1e-12, maxiter=20000)
    except Exception as exc:
        raise NoConvergence(f"iterative gap solvers failed: {exc}") from exc
    lam, vec = float(w[0]), v[:, 0]
    res = sym.residual_norm(vec, lam)
    if res > tol_abs:
        raise NoConvergence(
            f"gap eigenpair residual {res:.3e} above {tol_abs:.3e}")
    return GapReport(gap=lam, method="eigsh", residual=res, converged=True,
                     meta=_meta(chain.table))


def variational_gap_upper(chain: HeatBathChain, f: np.ndarray) -> float:
    """Rayleigh quotient D(f)/Var(f): an upper bound on the gap."""
    f = np.asarray(f, dtype=np.float64)
    var = chain.variance(f)
    scale = max(float(chain.table.expectation(f * f)), 1.0)
    if var <= 1e-13 * scale:
        raise ZeroVariance("test function is constant under the measure")
    return chain.dirichlet_form(f) / var


# ---------------------------------------------------------------------------
# magnetization bottleneck (free-boundary slow mixing)
# ---------------------------------------------------------------------------

def magnetization_bound(chain: HeatBathChain) -> dict:
    """Gap upper bound from the indicator of positive magnetization.

    Needs an odd number of sites so the indicator has no boundary class.
    Returns the Dirichlet energy, the variance (exactly 1/4 under a
    flip-symmetric law), the Rayleigh upper bound, and the crossing-flow
    counting bound  gap <= 2 (k+1) mu(m = 1).
    """
    k = chain.k
    if k % 2 == 0:
        raise EvenN(f"positive-magnetization cut needs odd sites, got {k}")
    pop = _popcount(np.arange(1 << k, dtype=np.uint32))
    m = 2 * pop - k
    f = (m > 0).astype(np.float64)
    dir_energy = chain.dirichlet_form(f)
    var = chain.variance(f)
    if var <= 0:
        raise ZeroVariance("indicator has zero variance")
    p = chain.table.probabilities()
    mu_m1 = float(p[m == 1].sum())
    # crossing flow: pairs (m=1) -> (m=-1) via flipping a plus spin
    flow = 0.0
    sel = np.flatnonzero(m == 1)
    for j in range(k):
        cj = chain.rate_column(j)
        has_plus = (sel >> j) & 1 == 1
        rows = sel[has_plus]
        flow += float(np.dot(p[rows], cj[rows]))
    return {"gap_upper": dir_energy / var, "dirichlet": dir_energy,
            "variance": var, "mu_m1": mu_m1, "crossing_flow": flow,
            "counting_upper": 2.0 * (k + 1) * mu_m1,
            "meta": _meta(chain.table)}


def slow_mixing_certificate(ball: BallSystem, params: GibbsParams) -> dict:
    """Free-boundary slow-mixing numbers on one ball: the magnetization
    bottleneck plus the expansion tail bound
    mu(m = 1) <= 2^n exp(-beta * eps * (n - 1)), eps the exact edge
    expansion of the interior graph."""
    bc = BoundaryCondition.free()
    chain = HeatBathChain(exact_gibbs(ball, bc, params))
    out = magnetization_bound(chain)
    eps = float(cheeger_exact(ball.interior))
    n = ball.n
    tail = math.exp(n * math.log(2.0) - params.beta * eps * (n - 1))
    out.update({"cheeger": eps,
                "tail_bound": tail,
                "tail_ok": out["mu_m1"] <= tail * (1.0 + 1e-12)})
    return out


# ---------------------------------------------------------------------------
# path coupling contraction
# ---------------------------------------------------------------------------

def coupling_contraction(ball: BallSystem, bc: BoundaryCondition,
                         params: GibbsParams, mode: str = "exact",
                         samples: int = 2000, seed: int = 0
                         ) -> ContractionReport:
    """Worst-case drift of the grand coupling over Hamming-one pairs.

    For a pair differing at v the expected distance drift per unit time is
    sum over neighbours w of |p_w(+ at v) - p_w(- at v)| minus one; alpha
    is minus the maximum over v and configurations.  A positive alpha is a
    gap lower bound; alpha <= 0 is reported, not an error.  ``exact``
    enumerates every configuration (n <= 20), ``mc`` samples uniformly.
    """
    from .gibbs import ghost_field
    from scipy.special import expit
    n = ball.n
    g = ball.interior
    gf = ghost_field(ball, bc)
    worst = -1.0
    worst_site = -1
    checked = 0
    if mode == "exact":
        if n > CONTRACTION_EXACT_CAP:
            raise TooLarge(f"exact contraction scan for n={n} exceeds "
                           f"{CONTRACTION_EXACT_CAP}")
        idx = np.arange(1 << n, dtype=np.uint32)
        spins = {}

        def spin(j):
            if j not in spins:
                spins[j] = (((idx >> j) & 1).astype(np.int8) << 1) - 1
            return spins[j]

        for v in range(n):
            total = np.zeros(1 << n)
            for w in g.neighbors(v):
                w = int(w)
                base = np.full(1 << n, gf[w] + params.h)
                for u in g.neighbors(w):
                    u = int(u)
                    if u != v:
                        base += spin(u)
                total += np.abs(expit(2 * params.beta * (base + 1.0))
                                - expit(2 * params.beta * (base - 1.0)))
            m = float(total.max())
            checked += 1 << n
            if m > worst:
                worst, worst_site = m, v
    elif mode == "mc":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        for _ in range(samples):
            sp = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
            v = int(rng.integers(n))
            m = discrepancy_sum(ball, bc, params, sp, v)
            checked += 1
            if m > worst:
                worst, worst_site = m, v
    else:
        raise BadParams(f"unknown contraction mode {mode!r}")
    drift = worst - 1.0
    alpha = -drift
    return ContractionReport(
        alpha=alpha, drift_max=drift, worst_site=worst_site,
        contracting=alpha > 0, mode=mode, n_checked=checked,
        meta={"family": g.family, "n": n, "bc": bc.label,
              "beta": params.beta, "h": params.h})


# ---------------------------------------------------------------------------
# martingale (level-by-level) variance decomposition
# ---------------------------------------------------------------------------

def martingale_check(table: GibbsTable, f: np.ndarray) -> dict:
    """Exact telescoping Var(f) = sum_i mu[ Var(M_i | levels >= i+1) ]
    with M_i = mu(f | levels >= i); returns per-level terms and the
    relative residual of the identity.

    Relies on BFS vertex order: level i occupies one contiguous bit range,
    so conditioning on the levels above i is a reshape.
    """
    ball = table.ball
    n = ball.n
    if table.region != tuple(range(n)):
        raise BadParams("martingale scan needs the full-interior table")
    if n > MARTINGALE_CAP:
        raise TooLarge(f"martingale scan for n={n} exceeds {MARTINGALE_CAP}")
    f = np.asarray(f, dtype=np.float64)
    p = table.probabilities()
    offsets = [int(o) for o in ball.interior.level_offsets] + [n]
    levels = ball.m + 1
    m_prev = f
    terms = []
    for i in range(1, levels + 1):
        o = offsets[i]
        w = p.reshape(1 << (n - o), 1 << o)
        rows = w.sum(axis=1)
        cond = np.where(rows[:, None] > 0, w / np.maximum(rows, 1e-300)[:, None], 0.0)
        m_i = np.repeat((cond * f.reshape(1 << (n - o), 1 << o)).sum(axis=1),
                        1 << o)
        terms.append(float(np.dot(p, (m_prev - m_i) ** 2)))
        m_prev = m_i
    mean = float(np.dot(p, f))
    terms.append(float(np.dot(p, (m_prev - mean) ** 2)))
    var = table.variance(f)
    total = math.fsum(terms)
    residual = abs(var - total) / max(var, 1e-300)
    return {"variance": var, "terms": terms, "residual": residual,
            "levels": levels, "meta": _meta(table)}


# ---------------------------------------------------------------------------
# total-variation mixing time
# ---------------------------------------------------------------------------

def tv_mixing_time(chain: HeatBathChain, epsilon: float = math.exp(-1),
                   rel_tol: float = 1e-3) -> MixingReport:
    """First t with max_{start} ||h_t - 1||_{L1(mu)} <= epsilon (that norm
    is twice the total-variation distance).

    Two exact routes share the bracketing logic.  When every state has
    probability above the roundoff-amplification floor, one symmetric
    eigendecomposition is reused for all bisection steps (e^{tL} =
    D^{-1/2} U e^{-t Lambda} U^T D^{1/2}).  Otherwise the D^{+-1/2}
    conjugation would blow eigenvector roundoff up by 1/sqrt(min mu), so
    the computation stays in probability space: one expm for a fine time
    step, a dyadic ladder of matrix squarings, and a binary-digit walk to
    the crossing.
    """
    k = chain.k
    if k > MIXING_CAP:
        raise TooLarge(f"tv mixing for 2^{k} states exceeds 2^{MIXING_CAP}")
    if not 0 < epsilon < 2:
        raise BadParams("epsilon must lie in (0, 2)")
    a = _dense_symmetric(chain)
    mu = chain.table.probabilities()
    gap = float(np.linalg.eigvalsh(a)[1])
    # conjugation multiplies absolute eigenvector error (~1e-15) by
    # 1/sqrt(mu_min); keep the spectral route only while that stays tiny
    if 1e-15 / math.sqrt(float(mu.min())) <= 1e-6:
        tau1, bracket, evals, method = _tau1_spectral(
            a, mu, gap, k, epsilon, rel_tol)
    else:
        tau1, bracket, evals, method = _tau1_dyadic(
            chain, mu, gap, k, epsilon, rel_tol)
    return MixingReport(tau1=tau1, epsilon=epsilon, gap=gap,
                        product=tau1 * gap, bracket=bracket,
                        rel_tol=rel_tol, evaluations=evals,
                        method=method, meta=_meta(chain.table))


def _tau1_spectral(a, mu, gap, k, epsilon, rel_tol):
    w, u = np.linalg.eigh(a)
    sq = np.sqrt(mu)
    evals = 0

    def dist(t: float) -> float:
        nonlocal evals
        evals += 1
        e = (u * np.exp(-t * np.maximum(w, 0.0))) @ u.T
        pt = (e * sq[None, :]) / sq[:, None]
        return float(np.abs(pt - mu[None, :]).sum(axis=1).max())

    lo = 0.1 / gap
    hi = 10.0 * k / gap
    grow = 0
    while dist(hi) > epsilon:
        hi *= 4.0
        grow += 1
        if grow > 8:
            raise NoConvergence("mixing bracket failed to capture tau1")
    while dist(lo) <= epsilon:
        lo /= 4.0
        grow += 1
        if grow > 16:
            raise NoConvergence("mixing bracket failed below")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if dist(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), (lo, hi), evals, "eigh+bisection"


def _tau1_dyadic(chain, mu, gap, k, epsilon, rel_tol):
    from scipy.linalg import expm
    gen = chain.assemble_generator().toarray()
    evals = 0

    def dist(p) -> float:
        nonlocal evals
        evals += 1
        return float(np.abs(p - mu[None, :]).sum(axis=1).max())

    dt = rel_tol / gap
    for _ in range(4):
        base = expm(dt * gen)
        if dist(base) > epsilon:
            break
        dt /= 64.0                        # tau1 below the step; refine
    else:
        raise NoConvergence("mixing dyadic step failed to go below tau1")
    ladder = [base]
    while dist(ladder[-1]) > epsilon:
        if len(ladder) > 60:
            raise NoConvergence("mixing dyadic ladder failed to capture tau1")
        ladder.append(ladder[-1] @ ladder[-1])
    j = len(ladder) - 1
    if j == 0:
        raise NoConvergence("mixing dyadic ladder inconsistent at base step")
    # crossing lies in (2^{j-1}, 2^j] steps of dt: walk the binary digits
    m_lo = 1 << (j - 1)
    cur = ladder[j - 1]
    for jj in range(j - 2, -1, -1):
        trial = cur @ ladder[jj]
        if dist(trial) > epsilon:
            cur = trial
            m_lo += 1 << jj
    tau1 = (m_lo + 0.5) * dt
    return tau1, (m_lo * dt, (m_lo + 1) * dt), evals, "expm+dyadic"


# ---------------------------------------------------------------------------
# Monte Carlo relaxation estimate
# ---------------------------------------------------------------------------

def autocorrelation_relaxation(ball: BallSystem, bc: BoundaryCondition,
                               params: GibbsParams, t_max: float, seed: int,
                               dt: float = 0.5, burn_in: float | None = None,
                               min_points: int = 4,
                               r2_floor: float = 0.9) -> dict:
    """Relaxation time from the exponential tail of the magnetization
    autocorrelation along one long trajectory.

    Fits log rho(lag) by least squares over the lags with rho > 0.05 and
    raises PoorFit when fewer than ``min_points`` usable lags remain, the
    slope is nonnegative, or R^2 falls below ``r2_floor``.
    """
    burn = 10.0 * dt if burn_in is None else burn_in
    if t_max <= burn + 10 * dt:
        raise BadParams("t_max too short for the requested burn-in and dt")
    traj = simulate_ct(ball, bc, params, "plus", t_max, seed)
    grid = np.arange(burn, t_max, dt)
    mags = _magnetization_series(traj, grid) / ball.n
    x = mags - mags.mean()
    nfft = 1 << int(np.ceil(np.log2(2 * len(x))))
    fx = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(fx * np.conj(fx), nfft)[:len(x)]
    acov /= np.arange(len(x), 0, -1)
    if acov[0] <= 0:
        raise PoorFit("observable has zero empirical variance")
    rho = acov / acov[0]
    max_lag = min(len(x) // 4, 400)
    lags = []
    for l in range(1, max_lag):
        if rho[l] <= 0.05:
            break
        lags.append(l)
    if len(lags) < min_points:
        raise PoorFit(f"only {len(lags)} usable autocorrelation lags")
    ts = np.array(lags, dtype=np.float64) * dt
    ys = np.log(rho[lags])
    slope, intercept = np.polyfit(ts, ys, 1)
    pred = slope * ts + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / max(ss_tot, 1e-300)
    if slope >= 0:
        raise PoorFit(f"nonnegative autocorrelation slope {slope:.3e}")
    if r2 < r2_floor:
        raise PoorFit(f"autocorrelation fit R^2 = {r2:.3f} below {r2_floor}")
    dof = max(len(ts) - 2, 1)
    se = math.sqrt(ss_res / dof / float(((ts - ts.mean()) ** 2).sum()))
    tau = -1.0 / slope
    lo_sl, hi_sl = slope - 1.96 * se, slope + 1.96 * se
    ci = (-1.0 / lo_sl, (-1.0 / hi_sl) if hi_sl < 0 else math.inf)
    return {"tau_rel": tau, "gap_estimate": 1.0 / tau, "r_squared": r2,
            "ci": ci, "slope": slope, "n_lags": len(lags),
            "n_samples": len(x), "dt": dt, "events": traj.n_events,
            "meta": {"family": ball.interior.family, "n": ball.n,
                     "bc": bc.label, "beta": params.beta, "h": params.h,
                     "seed": seed}}


def _magnetization_series(traj: Trajectory, grid: np.ndarray) -> np.ndarray:
    m0 = int(traj.initial.sum())
    if traj.n_events == 0:
        return np.full(len(grid), float(m0))
    deltas = 2 * traj.spins.astype(np.int64)
    series = m0 + np.concatenate([[0], np.cumsum(deltas)])
    pos = np.searchsorted(traj.times, grid, side="right")
    return series[pos].astype(np.float64)
