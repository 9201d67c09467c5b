import numpy as np
import pytest

from raresum import builtin_model


@pytest.fixture(scope="session")
def std_gauss():
    return builtin_model("gaussian-mean", mu=0.0, sigma=1.0, d=1)


@pytest.fixture(scope="session")
def gauss_005():
    return builtin_model("gaussian-mean", mu=0.05, sigma=1.0, d=1)


@pytest.fixture(scope="session")
def expo():
    return builtin_model("exponential-mean", rate=1.0)


@pytest.fixture(scope="session")
def mean_square():
    return builtin_model("gaussian-mean-and-square", mu=0.0, sigma=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240609)
