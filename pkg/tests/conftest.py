import numpy as np
import pytest

from infotrap import Environment, GaussianPrior


@pytest.fixture
def example2():
    """Three sources over (target, one confounder): unbiased, confounded-strong, confounder-only."""
    return Environment([[1, 0], [3, 1], [0, 1]])


@pytest.fixture
def example2_trap_prior():
    return GaussianPrior.from_diagonal([1.0, 10.0])


@pytest.fixture
def precise_info():
    """Four sources over (x, y, b) predicting x + y; pairs {1,2} and {3,4} both span."""
    return Environment(
        [[10, 0, 0], [0, 10, 0], [4, 5, 10], [8, 6, -20]],
        objective=[(1.0, [1, 1, 0])],
    )


@pytest.fixture
def precise_info_prior():
    return GaussianPrior.from_diagonal([0.1, 0.1, 0.039])


@pytest.fixture
def example3():
    """Five sources over four states; the two-source best set competes with a slow triple."""
    return Environment([[10, 1, 0, 0], [0, 1, 0, 0], [1, 0, 1, 0], [0, 0, 1, 1], [0, 0, 0, 1]])


@pytest.fixture
def parity_env():
    """Two interchangeable source pairs, so no unique best set exists."""
    return Environment([[1, 1, 0], [0, 1, 0], [1, 0, 1], [0, 0, 1]])


@pytest.fixture
def parity_prior():
    return GaussianPrior.from_diagonal([1.0, 1 / 2.3, 1 / 3.8])


def random_environment(rng, n=None, k=None, low=-5.0, high=5.0):
    n = n or int(rng.integers(2, 7))
    k = k or int(rng.integers(1, 5))
    return Environment(rng.uniform(low, high, size=(n, k)))


def random_pd_prior(rng, k):
    a = rng.uniform(-1, 1, size=(k, k))
    cov = a @ a.T + (0.3 + rng.uniform(0, 1)) * np.eye(k)
    return GaussianPrior(mean=rng.uniform(-1, 1, k), covariance=cov)
