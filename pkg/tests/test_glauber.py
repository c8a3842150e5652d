"""Heat-bath dynamics: rates, simulation, couplings, exact generators."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from glaubergap.errors import BadParams, TooLarge
from glaubergap.generators import gen_tree
from glaubergap.gibbs import (BoundaryCondition, GibbsParams, exact_gibbs,
                              marginal_measure)
from glaubergap.glauber import (HeatBathChain, Trajectory,
                                coupled_pair_simulate, discrepancy_sum,
                                flip_rates, grand_coupling_step, local_fields,
                                marginal_chain, occupation_distribution,
                                plus_probabilities, simulate_ct)
from glaubergap.graphs import ball


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------

def test_local_fields(tree3_b1):
    all_plus = np.ones(4, dtype=np.int8)
    free = local_fields(tree3_b1, BoundaryCondition.free(), all_plus)
    assert free.tolist() == [3.0, 1.0, 1.0, 1.0]
    plus = local_fields(tree3_b1, BoundaryCondition.plus(), all_plus)
    assert plus.tolist() == [3.0, 3.0, 3.0, 3.0]


def test_flip_rates_values(tree3_b1):
    sp = np.ones(4, dtype=np.int8)
    fld = local_fields(tree3_b1, BoundaryCondition.plus(), sp)
    r0 = flip_rates(GibbsParams(0.0), sp, fld)
    assert np.allclose(r0, 0.5)
    r1 = flip_rates(GibbsParams(1.0), sp, fld)
    # spin +1 in a field of 3 aligned neighbours flips at 1/(1 + e^6)
    assert np.allclose(r1, 1.0 / (1.0 + math.exp(6.0)), rtol=1e-14)
    assert ((r1 > 0) & (r1 < 1)).all()
    # flipping the spin mirrors the rate
    r_dn = flip_rates(GibbsParams(1.0), -sp, fld)
    assert np.allclose(r1 + r_dn, 1.0, rtol=1e-14)


def test_plus_probabilities_monotone_in_field():
    pp = GibbsParams(0.75, h=0.1)
    fields = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
    probs = plus_probabilities(pp, fields)
    assert (np.diff(probs) > 0).all()
    assert np.allclose(probs, expit(2 * 0.75 * (fields + 0.1)), rtol=1e-14)


# --------------------------------------------------------------------------
# continuous-time simulation
# --------------------------------------------------------------------------

def test_simulate_no_events(tree3_b1):
    traj = simulate_ct(tree3_b1, BoundaryCondition.free(), GibbsParams(0.5),
                       "plus", t_max=5.0, seed=1, max_events=0)
    assert traj.n_events == 0
    assert (traj.final == traj.initial).all()


def test_simulate_deterministic_and_consistent(tree3_b1):
    kw = dict(t_max=20.0, seed=7)
    a = simulate_ct(tree3_b1, BoundaryCondition.plus(), GibbsParams(0.8),
                    "minus", **kw)
    b = simulate_ct(tree3_b1, BoundaryCondition.plus(), GibbsParams(0.8),
                    "minus", **kw)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.sites, b.sites)
    assert np.array_equal(a.spins, b.spins)
    assert a.n_events > 0
    assert (np.diff(a.times) > 0).all()
    assert ((a.sites >= 0) & (a.sites < tree3_b1.n)).all()
    replay = a.initial.copy()
    for x, s in zip(a.sites, a.spins):
        assert replay[x] == -s  # events are actual flips
        replay[x] = s
    assert (replay == a.final).all()


def test_simulate_guards(tree3_b1):
    with pytest.raises(BadParams):
        simulate_ct(tree3_b1, BoundaryCondition.free(), GibbsParams(0.5),
                    "plus", t_max=0.0, seed=0)
    with pytest.raises(BadParams):
        simulate_ct(tree3_b1, BoundaryCondition.free(), GibbsParams(0.5),
                    "sideways", t_max=1.0, seed=0)
    with pytest.raises(BadParams):
        simulate_ct(tree3_b1, BoundaryCondition.free(), GibbsParams(0.5),
                    np.zeros(4, dtype=np.int8), t_max=1.0, seed=0)


def test_occupation_approaches_gibbs(tree3_b1):
    pp = GibbsParams(0.5)
    bc = BoundaryCondition.free()
    traj = simulate_ct(tree3_b1, bc, pp, "plus", t_max=1e9, seed=3,
                       max_events=30000)
    traj = Trajectory(**{**traj.__dict__, "t_max": float(traj.times[-1])})
    occ = occupation_distribution(traj)
    target = exact_gibbs(tree3_b1, bc, pp).probabilities()
    tv = 0.5 * np.abs(occ - target).sum()
    assert tv < 0.08


def test_occupation_cap(tree3):
    b = ball(tree3, 3)  # 22 interior sites
    traj = simulate_ct(b, BoundaryCondition.free(), GibbsParams(0.2),
                       "plus", t_max=1.0, seed=0, max_events=0)
    with pytest.raises(TooLarge):
        occupation_distribution(traj)


def test_trajectory_jsonl_roundtrip(tree3_b1, tmp_path):
    traj = simulate_ct(tree3_b1, BoundaryCondition.minus(), GibbsParams(0.7),
                       "plus", t_max=4.0, seed=11)
    path = tmp_path / "traj.jsonl"
    traj.to_jsonl(path)
    back = Trajectory.from_jsonl(path)
    assert back.family == traj.family
    assert back.bc_label == "minus"
    assert back.seed == 11 and back.beta == 0.7
    assert np.allclose(back.times, traj.times)
    assert np.array_equal(back.sites, traj.sites)
    assert np.array_equal(back.spins, traj.spins)
    assert np.array_equal(back.initial, traj.initial)
    assert np.array_equal(back.final, traj.final)
    bad = tmp_path / "other.jsonl"
    bad.write_text('{"type": "something-else"}\n')
    with pytest.raises(BadParams):
        Trajectory.from_jsonl(bad)


# --------------------------------------------------------------------------
# grand coupling
# --------------------------------------------------------------------------

@given(st.integers(min_value=0, max_value=15),
       st.integers(min_value=0, max_value=15),
       st.integers(min_value=0, max_value=3),
       st.floats(0, 1, exclude_max=True, allow_nan=False))
def test_grand_coupling_monotone(hi_bits, drop_bits, x, u):
    b = ball(gen_tree(3, 2), 1)
    eta = np.array([1 if (hi_bits >> j) & 1 else -1 for j in range(4)],
                   dtype=np.int8)
    xi = eta.copy()
    xi[[j for j in range(4) if (drop_bits >> j) & 1]] = -1
    assert (xi <= eta).all()
    pp = GibbsParams(0.9)
    bc = BoundaryCondition.plus()
    grand_coupling_step(b, bc, pp, (eta, xi), x, u)
    assert (xi <= eta).all()


def test_grand_coupling_marginal_rule(tree3_b1):
    pp = GibbsParams(1.2, h=-0.3)
    bc = BoundaryCondition.plus()
    sp = np.array([1, -1, 1, -1], dtype=np.int8)
    f = local_fields(tree3_b1, bc, sp)
    for x in range(4):
        p = plus_probabilities(pp, f[x:x + 1])[0]
        for u, want in ((p - 1e-9, 1), (p + 1e-9, -1)):
            copy = sp.copy()
            grand_coupling_step(tree3_b1, bc, pp, (copy,), x, u)
            assert copy[x] == want
            assert (np.delete(copy, x) == np.delete(sp, x)).all()


def test_coupled_pair_identical_stays_together(tree3_b1):
    out = coupled_pair_simulate(tree3_b1, BoundaryCondition.free(),
                                GibbsParams(1.0), "plus", "plus",
                                t_max=5.0, seed=2)
    assert out["coalesce_time"] == 0.0
    assert (out["hamming"] == 0).all()


def test_coupled_pair_coalesces_without_coupling(tree3_b1):
    out = coupled_pair_simulate(tree3_b1, BoundaryCondition.free(),
                                GibbsParams(0.0), "plus", "minus",
                                t_max=200.0, seed=5)
    # at beta = 0 every resample merges the visited site for good
    assert out["coalesce_time"] is not None
    assert out["hamming"][-1] == 0
    assert (out["eta"] == out["xi"]).all()
    assert (np.diff(out["hamming"]) <= 0).all()


def test_discrepancy_sum_values(tree3_b1):
    sp = np.ones(4, dtype=np.int8)
    assert discrepancy_sum(tree3_b1, BoundaryCondition.free(),
                           GibbsParams(0.0), sp, 0) == 0.0
    got = discrepancy_sum(tree3_b1, BoundaryCondition.free(),
                          GibbsParams(0.5), sp, 0)
    # three leaves, each seeing only the root: |expit(1) - expit(-1)| each
    assert math.isclose(got, 3 * math.tanh(0.5), rel_tol=1e-12)


# --------------------------------------------------------------------------
# exact chain on a table
# --------------------------------------------------------------------------

def test_rates_satisfy_detailed_balance(chain_b1_free, chain_b1_plus):
    assert chain_b1_free.detailed_balance_residual() <= 1e-12
    assert chain_b1_plus.detailed_balance_residual() <= 1e-12


def test_generator_kills_constants(chain_b1_plus):
    out = chain_b1_plus.generator_apply(np.ones(16))
    assert np.abs(out).max() <= 1e-14


def test_generator_stationarity(chain_b1_free, rng):
    p = chain_b1_free.table.probabilities()
    f = rng.standard_normal(16)
    assert abs(float(np.dot(p, chain_b1_free.generator_apply(f)))) <= 1e-14


def test_generator_self_adjoint(chain_b1_plus, rng):
    p = chain_b1_plus.table.probabilities()
    f = rng.standard_normal(16)
    g = rng.standard_normal(16)
    lhs = float(np.dot(p * f, chain_b1_plus.generator_apply(g)))
    rhs = float(np.dot(p * g, chain_b1_plus.generator_apply(f)))
    assert math.isclose(lhs, rhs, rel_tol=1e-11, abs_tol=1e-13)


def test_dirichlet_matches_generator(chain_b1_free, rng):
    f = rng.standard_normal(16)
    p = chain_b1_free.table.probabilities()
    quad = -float(np.dot(p * f, chain_b1_free.generator_apply(f)))
    assert math.isclose(quad, chain_b1_free.dirichlet_form(f), rel_tol=1e-11)


def test_dirichlet_dual_formulas(chain_b1_free, chain_b1_plus, rng):
    for chain in (chain_b1_free, chain_b1_plus):
        f = rng.standard_normal(16)
        a = chain.dirichlet_form(f, method="rates")
        b = chain.dirichlet_form(f, method="variance")
        assert math.isclose(a, b, rel_tol=1e-12)
    with pytest.raises(BadParams):
        chain_b1_free.dirichlet_form(np.ones(16), method="gradient")


def test_assembled_generator_matches_apply(chain_b1_plus, rng):
    mat = chain_b1_plus.assemble_generator()
    assert np.abs(np.asarray(mat.sum(axis=1)).ravel()).max() <= 1e-14
    f = rng.standard_normal(16)
    assert np.allclose(mat @ f, chain_b1_plus.generator_apply(f),
                       rtol=1e-12, atol=1e-14)


def test_assemble_cap(tree4):
    b = ball(tree4, 2)  # 17 interior sites
    chain = HeatBathChain(
        exact_gibbs(b, BoundaryCondition.free(), GibbsParams(0.3)))
    with pytest.raises(TooLarge):
        chain.assemble_generator()


def test_symmetric_operator_kernel_and_symmetry(chain_b1_plus, rng):
    sym = chain_b1_plus.symmetric_operator()
    kv = sym.kernel_vector()
    assert math.isclose(float(np.linalg.norm(kv)), 1.0, rel_tol=1e-13)
    assert np.abs(sym.matvec(kv)).max() <= 1e-14
    assert sym.residual_norm(kv, 0.0) <= 1e-13
    f = rng.standard_normal(16)
    g = rng.standard_normal(16)
    assert math.isclose(float(np.dot(f, sym.matvec(g))),
                        float(np.dot(g, sym.matvec(f))), rel_tol=1e-11)


def test_symmetric_operator_spectrum_matches_generator(chain_b1_free):
    dense_l = chain_b1_free.assemble_generator().toarray()
    ev_l = np.sort(np.linalg.eigvals(-dense_l).real)
    sym = chain_b1_free.symmetric_operator()
    cols = np.column_stack([sym.matvec(col) for col in np.eye(16)])
    ev_a = np.sort(np.linalg.eigvalsh(cols))
    assert np.allclose(ev_l, ev_a, rtol=1e-9, atol=1e-11)


# --------------------------------------------------------------------------
# marginal chains
# --------------------------------------------------------------------------

def test_marginal_chain_singleton(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    mc = marginal_chain(tree3_b2, BoundaryCondition.plus(), GibbsParams(1.0),
                        1, (1,), tau)
    rates = mc.total_rates()
    # one site: the two flip rates are expit(+-d) and sum to one
    assert math.isclose(float(rates.sum()), 1.0, rel_tol=1e-13)
    assert mc.detailed_balance_residual() <= 1e-13


def test_marginal_chain_detailed_balance(tree3_b2):
    tau = {v: -1 for v in range(tree3_b2.n)}
    mc = marginal_chain(tree3_b2, BoundaryCondition.minus(), GibbsParams(0.8),
                        1, (1, 2, 3), tau)
    assert mc.k == 3
    assert mc.detailed_balance_residual() <= 1e-10
    target = marginal_measure(tree3_b2, BoundaryCondition.minus(),
                              GibbsParams(0.8), 1, (1, 2, 3), tau)
    assert np.allclose(mc.table.probabilities(), target.probabilities())


def test_marginal_chain_zero_coupling_fair(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    mc = marginal_chain(tree3_b2, BoundaryCondition.free(), GibbsParams(0.0),
                        1, (1, 2), tau)
    for j in range(mc.k):
        assert np.allclose(mc.rate_column(j), 0.5, rtol=1e-13)


def test_chain_needs_a_site(tree3_b1):
    t = exact_gibbs(tree3_b1, BoundaryCondition.free(), GibbsParams(0.5))
    with pytest.raises(BadParams):
        HeatBathChain(t.restrict({0: 1, 1: 1, 2: 1, 3: 1}))
