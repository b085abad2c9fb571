import numpy as np
import pytest

from cqreg import Dataset


def make_instance(n, d, seed=0, rho=10.0, k_true=None):
    """Cobb-Douglas style instance: U[1,10] inputs, SNR-calibrated noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(1.0, 10.0, (n, d))
    k_true = k_true if k_true is not None else min(2, d)
    signal = np.prod(X[:, :k_true] ** (0.8 / k_true), axis=1)
    sigma = np.sqrt(signal.var() / rho)
    y = signal + rng.normal(0.0, sigma, n)
    return Dataset(X, y)


@pytest.fixture
def small_noisy():
    return make_instance(12, 3, seed=1)


@pytest.fixture
def noiseless_linear():
    rng = np.random.default_rng(7)
    X = rng.uniform(1.0, 10.0, (20, 2))
    return Dataset(X, X.sum(axis=1))
