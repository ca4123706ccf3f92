import mpmath
import numpy as np
import pytest

from symnode import ModelParams, generate_dataset

mpmath.mp.dps = 40


def gd_oracle(x):
    """High-precision Gudermannian, independent of the numpy implementation."""
    return float(mpmath.asin(mpmath.tanh(mpmath.mpf(x))))


def exact_oracle(z0, t, th1, th2):
    z0, t, th1, th2 = (mpmath.mpf(x) for x in (z0, t, th1, th2))
    phi0 = th1 * z0 + th2
    phi = mpmath.asin(mpmath.tanh(th1 * t + mpmath.atanh(mpmath.sin(phi0))))
    return float((phi - th2) / th1)


P_TRUE = ModelParams(1.0, 0.5)


@pytest.fixture(scope="session")
def clean_dataset():
    return generate_dataset(P_TRUE, 50, (-0.9, 0.4), [1.0], 0.0, seed=0)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(P_TRUE, 8, (-0.9, 0.4), [0.5, 1.0], 0.0, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
