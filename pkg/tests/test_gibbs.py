"""Exact Gibbs tables: frozen values, identities, conditioning, audits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glaubergap.errors import BadParams, BadRegion, NotGrowing, TooLarge
from glaubergap.generators import gen_tree
from glaubergap.gibbs import (BoundaryCondition, GibbsParams,
                              anchored_negative_component, claim32_audit,
                              conditional_measure, config_from_spins,
                              correlation_decay_profile, density_ratio_checks,
                              exact_gibbs, ghost_field, hamiltonian,
                              magnetization_distribution, marginal_measure,
                              negative_component, spins_from_config,
                              upper_levels)
from glaubergap.geometry import region_vertices
from glaubergap.graphs import ball, build_from_edges


def _close(a, b, rel=1e-12, abs_=1e-15):
    assert math.isclose(a, b, rel_tol=rel, abs_tol=abs_), (a, b)


# --------------------------------------------------------------------------
# frozen reference values (independently recomputed by linear-domain
# enumeration with fsum before being pinned here)
# --------------------------------------------------------------------------

def _edge_ball():
    return ball(build_from_edges([(0, 1), (1, 2)], 0, family="path3"), 1)


def test_free_edge_partition_function():
    b = _edge_ball()
    for beta, want in ((0.5, 1.506408868078168), (1.0, 1.8200751916029179)):
        t = exact_gibbs(b, BoundaryCondition.free(), GibbsParams(beta))
        _close(t.log_z, want, rel=1e-13)
        # closed form log(4 cosh beta)
        _close(t.log_z, math.log(4 * math.cosh(beta)), rel=1e-13)


TREE3_B1_PLUS_BETA1 = {
    (1, 1, 1, 1): 0.9890392803022835,
    (-1, -1, -1, -1): 6.076867363960132e-06,
    (1, -1, -1, -1): 1.5063048205728933e-08,
    (-1, 1, 1, 1): 0.002451583268857814,
    (-1, -1, 1, 1): 0.000331785716069013,
    (-1, -1, -1, 1): 4.490231385806224e-05,
}


def test_tree3_plus_table_frozen(tree3_b1):
    t = exact_gibbs(tree3_b1, BoundaryCondition.plus(), GibbsParams(1.0))
    _close(t.log_z, 9.011021230956743, rel=1e-13)
    p = t.probabilities()
    for spins, want in TREE3_B1_PLUS_BETA1.items():
        _close(p[config_from_spins(spins)], want, rel=1e-12)
    _close(t.spin_probability(0, 1), 0.996412275773997, rel=1e-12)
    pop = np.array([bin(c).count("1") for c in range(16)])
    mag = 2.0 * pop - 4.0
    _close(t.expectation(mag), 3.9754760358812957, rel=1e-12)


def test_hyperbolic_minus_table_frozen(h54):
    b = ball(h54, 1)
    assert b.n == 6
    t = exact_gibbs(b, BoundaryCondition.minus(), GibbsParams(0.7))
    _close(t.log_z, 17.505534722279318, rel=1e-13)
    _close(t.spin_probability(0, 1), 0.0009769125204073749, rel=1e-12)


TREE4_B1_FREE_MAG = {5: 0.2396082109038465, 3: 0.193902376623202,
                     1: 0.0664894124729515}


def test_magnetization_distribution_frozen(tree4):
    b = ball(tree4, 1)
    law = magnetization_distribution(b, BoundaryCondition.free(),
                                     GibbsParams(0.8))
    assert set(law) == {-5, -3, -1, 1, 3, 5}  # odd n never hits m = 0
    for m, want in TREE4_B1_FREE_MAG.items():
        _close(law[m], want, rel=1e-12)
        _close(law[-m], want, rel=1e-12)  # free, h = 0
    _close(sum(law.values()), 1.0, rel=1e-12)


def test_magnetization_binomial_at_zero_coupling():
    g = build_from_edges([(0, 1), (0, 2), (1, 3), (2, 4)], 0, family="path5")
    b = ball(g, 1)
    law = magnetization_distribution(b, BoundaryCondition.free(),
                                     GibbsParams(0.0))
    for m, want in ((-3, 0.125), (-1, 0.375), (1, 0.375), (3, 0.125)):
        _close(law[m], want, rel=1e-12)


# --------------------------------------------------------------------------
# structural identities
# --------------------------------------------------------------------------

def test_hamiltonian_matches_table(tree3_b1):
    pp = GibbsParams(0.9, h=0.3)
    for bc in (BoundaryCondition.free(), BoundaryCondition.plus()):
        t = exact_gibbs(tree3_b1, bc, pp)
        for c in range(16):
            _close(t.log_weights[c], hamiltonian(tree3_b1, bc, pp, c),
                   rel=1e-12)


def test_flip_symmetry_free(tree3_b1):
    t = exact_gibbs(tree3_b1, BoundaryCondition.free(), GibbsParams(1.2))
    p = t.probabilities()
    mask = (1 << t.k) - 1
    assert np.allclose(p, p[mask ^ np.arange(16)], rtol=1e-12)


def test_boundary_monotonicity(tree3_b1):
    pp = GibbsParams(1.0)
    tp = exact_gibbs(tree3_b1, BoundaryCondition.plus(), pp)
    tf = exact_gibbs(tree3_b1, BoundaryCondition.free(), pp)
    tm = exact_gibbs(tree3_b1, BoundaryCondition.minus(), pp)
    for x in range(tree3_b1.n):
        pm = tm.spin_probability(x, 1)
        pf = tf.spin_probability(x, 1)
        pplus = tp.spin_probability(x, 1)
        assert pm < pf < pplus


def test_spin_probability_is_singleton_event(tree3_b1):
    t = exact_gibbs(tree3_b1, BoundaryCondition.plus(), GibbsParams(0.6))
    for x in range(tree3_b1.n):
        _close(t.spin_probability(x, 1), t.event_probability({x: 1}),
               rel=1e-14)
        _close(t.spin_probability(x, 1) + t.spin_probability(x, -1), 1.0,
               rel=1e-13)


def test_conditional_measure_matches_restrict(tree3_b1):
    pp = GibbsParams(0.7, h=-0.2)
    bc = BoundaryCondition.plus()
    frozen = {1: -1, 2: 1, 3: 1}
    fresh = conditional_measure(tree3_b1, bc, pp, (0,), frozen)
    sliced = exact_gibbs(tree3_b1, bc, pp).restrict(frozen)
    assert fresh.region == sliced.region == (0,)
    assert np.allclose(fresh.probabilities(), sliced.probabilities(),
                       rtol=1e-12)


@settings(max_examples=20)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=16, max_size=16))
def test_tower_and_total_variance(f_list):
    b = ball(gen_tree(3, 2), 1)
    t = exact_gibbs(b, BoundaryCondition.plus(), GibbsParams(0.8, h=0.1))
    f = np.asarray(f_list)
    mean = t.expectation(f)
    var = t.variance(f)
    tower = 0.0
    between = 0.0
    within = 0.0
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            a = {1: s1, 2: s2}
            pa = t.event_probability(a)
            sub = t.restrict(a)
            # pull f back through the compressed sub-configurations
            fs = np.empty(1 << sub.k)
            for c in range(1 << sub.k):
                spins = dict(zip(sub.region, spins_from_config(c, sub.k)))
                spins.update(a)
                fs[c] = f[config_from_spins([spins[v] for v in range(4)])]
            m_a = sub.expectation(fs)
            tower += pa * m_a
            between += pa * (m_a - mean) ** 2
            within += pa * sub.variance(fs)
    _close(tower, mean, rel=1e-12, abs_=1e-12)
    _close(within + between, var, rel=1e-12, abs_=1e-12)


@settings(max_examples=20)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=16, max_size=16),
       st.lists(st.floats(-1, 1, allow_nan=False), min_size=16, max_size=16))
def test_covariance_polarization(f_list, g_list):
    b = ball(gen_tree(3, 2), 1)
    t = exact_gibbs(b, BoundaryCondition.free(), GibbsParams(1.1))
    f, g = np.asarray(f_list), np.asarray(g_list)
    _close(t.covariance(f, g),
           (t.variance(f + g) - t.variance(f - g)) / 4.0,
           rel=1e-10, abs_=1e-12)
    _close(t.covariance(f, f), t.variance(f), rel=1e-12, abs_=1e-14)


@given(st.floats(0, 2, allow_nan=False), st.floats(-1, 1, allow_nan=False))
def test_normalization(beta, h):
    b = ball(gen_tree(3, 2), 1)
    t = exact_gibbs(b, BoundaryCondition.plus(), GibbsParams(beta, h=h))
    _close(float(t.probabilities().sum()), 1.0, rel=1e-12)


@given(st.integers(min_value=1, max_value=12), st.data())
def test_config_spin_roundtrip(k, data):
    c = data.draw(st.integers(min_value=0, max_value=(1 << k) - 1))
    sp = spins_from_config(c, k)
    assert set(sp.tolist()) <= {-1, 1}
    assert config_from_spins(sp) == c
    with pytest.raises(BadParams):
        config_from_spins([0] * k)


# --------------------------------------------------------------------------
# level-region measures
# --------------------------------------------------------------------------

def test_upper_levels_bounds(tree3_b2):
    assert upper_levels(tree3_b2, 0) == tuple(range(10))
    assert upper_levels(tree3_b2, 2) == tuple(range(4, 10))
    assert upper_levels(tree3_b2, 3) == ()
    with pytest.raises(BadRegion):
        upper_levels(tree3_b2, 4)


def test_marginal_measure_two_routes(tree3_b2):
    pp = GibbsParams(0.9, h=0.2)
    bc = BoundaryCondition.plus()
    tau = {v: 1 for v in range(tree3_b2.n)}
    nu = marginal_measure(tree3_b2, bc, pp, 1, (1, 2), tau)
    assert nu.region == (1, 2)
    outside = [v for v in (0, 3)]
    other = exact_gibbs(tree3_b2, bc, pp) \
        .restrict({v: 1 for v in outside}).marginal_onto((1, 2))
    assert np.allclose(nu.probabilities(), other.probabilities(), rtol=1e-12)


def test_marginal_measure_singleton_route(tree3_b2):
    pp = GibbsParams(1.3)
    bc = BoundaryCondition.minus()
    tau = {v: -1 for v in range(tree3_b2.n)}
    nu = marginal_measure(tree3_b2, bc, pp, 1, (2,), tau)
    region = region_vertices(tree3_b2, 1, (2,))
    frozen = {v: -1 for v in range(tree3_b2.n) if v not in set(region)}
    table = conditional_measure(tree3_b2, bc, pp, region, frozen)
    _close(nu.probabilities()[1], table.spin_probability(2, 1), rel=1e-12)


def test_marginal_measure_fair_coins_at_zero_coupling(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    nu = marginal_measure(tree3_b2, BoundaryCondition.free(), GibbsParams(0.0),
                          1, (1, 2), tau)
    assert np.allclose(nu.probabilities(), 0.25, rtol=1e-12)


# --------------------------------------------------------------------------
# boundary-flip sensitivity
# --------------------------------------------------------------------------

def test_correlation_profile_root_probe(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    prof = correlation_decay_profile(tree3_b2, BoundaryCondition.free(),
                                     GibbsParams(1.0), 1, (1,), 1, (0, 2), tau)
    by_y = {r["y"]: r for r in prof}
    root = by_y[0]
    assert root["distance"] == 1
    assert root["difference"] > 0.5
    _close(root["monotone_gap"], root["difference"], rel=1e-14)
    # a same-level probe cannot reach x through the region: the influence
    # is exactly zero and the distance is reported as unreachable
    sib = by_y[2]
    assert sib["distance"] == -1
    assert sib["difference"] <= 1e-15


def test_correlation_profile_zero_coupling(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    prof = correlation_decay_profile(tree3_b2, BoundaryCondition.plus(),
                                     GibbsParams(0.0), 1, (1,), 1, (0,), tau)
    assert prof[0]["difference"] <= 1e-15


def test_correlation_profile_monotone_gap_sign(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    for beta in (0.5, 1.0, 2.0):
        prof = correlation_decay_profile(tree3_b2, BoundaryCondition.free(),
                                         GibbsParams(beta), 1, (1, 2), 1,
                                         (0, 3), tau)
        for r in prof:
            assert r["monotone_gap"] >= 0.0
            _close(r["monotone_gap"], r["difference"], rel=1e-12)


def test_correlation_profile_guards(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    with pytest.raises(BadRegion):
        correlation_decay_profile(tree3_b2, BoundaryCondition.free(),
                                  GibbsParams(1.0), 1, (1,), 2, (0,), tau)
    with pytest.raises(BadRegion):  # probe inside the free region
        correlation_decay_profile(tree3_b2, BoundaryCondition.free(),
                                  GibbsParams(1.0), 1, (1,), 1, (4,), tau)
    with pytest.raises(BadRegion):  # bordering vertex left unfrozen
        correlation_decay_profile(tree3_b2, BoundaryCondition.free(),
                                  GibbsParams(1.0), 1, (1,), 1, (2,),
                                  {v: 1 for v in range(1, tree3_b2.n)})


# --------------------------------------------------------------------------
# negative components
# --------------------------------------------------------------------------

def _brute_minus_component(b, region, config, start, include_start):
    pos = {v: j for j, v in enumerate(region)}
    minus = {v for v, j in pos.items() if not (config >> j) & 1}
    if not include_start and start not in minus:
        return frozenset()
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for w in b.interior.neighbors(a):
            w = int(w)
            if w in minus and w not in seen:
                seen.add(w)
                stack.append(w)
    return frozenset(seen)


def test_negative_component_cases(tree3_b1):
    region = tuple(range(4))
    assert negative_component(tree3_b1, region, 0b1111, 0) == frozenset()
    assert negative_component(tree3_b1, region, 0, 0) == frozenset(range(4))
    c = config_from_spins([1, -1, 1, 1])
    assert negative_component(tree3_b1, region, c, 1) == frozenset({1})
    assert anchored_negative_component(tree3_b1, region, c, 0) == \
        frozenset({0, 1})
    with pytest.raises(BadRegion):
        negative_component(tree3_b1, region, 0, 7)


@given(st.integers(min_value=0, max_value=(1 << 10) - 1))
def test_negative_components_partition(config):
    b = ball(gen_tree(3, 3), 2)
    region = tuple(range(b.n))
    minus = {v for v in range(b.n) if not (config >> v) & 1}
    comps = set()
    for x in range(b.n):
        comp = negative_component(b, region, config, x)
        assert comp == _brute_minus_component(b, region, config, x, False)
        if x in minus:
            assert x in comp
            comps.add(comp)
        else:
            assert comp == frozenset()
    seen = set()
    for comp in comps:
        assert not comp & seen  # pairwise disjoint
        seen |= comp
    assert seen == minus


# --------------------------------------------------------------------------
# flip audit and density ratios
# --------------------------------------------------------------------------

def test_claim_audit_tree(tree3_b2):
    rep = claim32_audit(tree3_b2, GibbsParams(1.0), 1, (1,), size_cap=3)
    assert rep["growth"] == 1
    assert rep["violations"] == 0
    assert rep["checked"] > 0
    assert rep["worst_log_ratio"] <= 1e-9


def test_claim_audit_guards(tree3_b2, h45):
    with pytest.raises(BadParams):
        claim32_audit(tree3_b2, GibbsParams(1.0), 1, (1,), size_cap=9)
    with pytest.raises(NotGrowing):
        claim32_audit(ball(h45, 2), GibbsParams(1.0), 1, (1,), size_cap=3)


def test_density_ratio_mean_is_one(tree3_b2):
    tau = {v: 1 for v in range(tree3_b2.n)}
    sups = []
    for beta in (0.0, 0.5, 1.0, 2.0):
        rep = density_ratio_checks(tree3_b2, GibbsParams(beta), 1, 1, tau)
        _close(rep["mean"], 1.0, rel=1e-10)
        sups.append(rep["sup"])
    assert sups[0] == 1.0  # independent spins: the flip changes nothing
    # past the initial rise the plus ghosts dominate and the single-site
    # flip tilts the upper levels less and less
    assert sups[1] > sups[2] > sups[3] > 1.0


def test_density_ratio_guard_level(tree3_b2):
    with pytest.raises(BadRegion):
        density_ratio_checks(tree3_b2, GibbsParams(1.0), 2, 1,
                             {v: 1 for v in range(tree3_b2.n)})


# --------------------------------------------------------------------------
# guards
# --------------------------------------------------------------------------

def test_table_cap():
    g = gen_tree(3, 5)
    b = ball(g, 4)  # 46 interior sites
    with pytest.raises(TooLarge):
        exact_gibbs(b, BoundaryCondition.free(), GibbsParams(0.5))


def test_region_validation(tree3_b1):
    pp = GibbsParams(0.5)
    bc = BoundaryCondition.free()
    with pytest.raises(BadRegion):
        conditional_measure(tree3_b1, bc, pp, (0, 9), {})
    with pytest.raises(BadRegion):  # frozen spin inside the region
        conditional_measure(tree3_b1, bc, pp, (0, 1), {1: 1, 2: 1, 3: 1})
    with pytest.raises(BadRegion):  # neighbour 2 of the root unassigned
        conditional_measure(tree3_b1, bc, pp, (0,), {1: 1})


def test_param_and_boundary_guards(tree3_b1):
    with pytest.raises(BadParams):
        GibbsParams(-0.1)
    with pytest.raises(BadParams):
        GibbsParams(float("nan"))
    with pytest.raises(BadParams):
        GibbsParams(1.0, h=float("inf"))
    with pytest.raises(BadParams):
        BoundaryCondition.fixed([2, 1])
    bc = BoundaryCondition.fixed([1, -1])
    with pytest.raises(BadParams):
        bc.ghost_values(tree3_b1)  # six ghosts, two spins


def test_ghost_field_values(tree3_b1):
    assert np.allclose(ghost_field(tree3_b1, BoundaryCondition.free()), 0.0)
    fp = ghost_field(tree3_b1, BoundaryCondition.plus())
    assert fp.tolist() == [0.0, 2.0, 2.0, 2.0]
    fm = ghost_field(tree3_b1, BoundaryCondition.minus())
    assert fm.tolist() == [0.0, -2.0, -2.0, -2.0]
