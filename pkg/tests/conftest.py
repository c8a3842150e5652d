"""Shared fixtures and hypothesis profile for the test suite."""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from glaubergap.generators import gen_hyperbolic, gen_tree
from glaubergap.gibbs import BoundaryCondition, GibbsParams, exact_gibbs
from glaubergap.glauber import HeatBathChain
from glaubergap.graphs import ball

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def tree3():
    return gen_tree(3, 4)


@pytest.fixture(scope="session")
def tree4():
    return gen_tree(4, 3)


@pytest.fixture(scope="session")
def h54():
    return gen_hyperbolic(5, 4, 3)


@pytest.fixture(scope="session")
def h45():
    return gen_hyperbolic(4, 5, 3)


@pytest.fixture(scope="session")
def tree3_b1(tree3):
    return ball(tree3, 1)


@pytest.fixture(scope="session")
def tree3_b2(tree3):
    return ball(tree3, 2)


@pytest.fixture(scope="session")
def chain_b1_free(tree3_b1):
    return HeatBathChain(
        exact_gibbs(tree3_b1, BoundaryCondition.free(), GibbsParams(1.0)))


@pytest.fixture(scope="session")
def chain_b1_plus(tree3_b1):
    return HeatBathChain(
        exact_gibbs(tree3_b1, BoundaryCondition.plus(), GibbsParams(1.5)))


def random_function(k, rng):
    return rng.standard_normal(1 << k)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
