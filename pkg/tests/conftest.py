import numpy as np
import pytest

from fosbo.problems import builtin_zoo


@pytest.fixture(scope="session")
def zoo():
    return builtin_zoo()


@pytest.fixture()
def canonical(zoo):
    """The 1-d all-ones instance: f = (x^2+y^2)/2, g = (y-x)^2/2."""
    return zoo["scalar-canonical"]


@pytest.fixture()
def canonical_problem(canonical):
    return canonical.to_problem()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
