import numpy as np
import pytest

from stcov import IsotropicLag, LagSet, build_var_model


@pytest.fixture(scope="session")
def var_model():
    """The reference 3x3 model: unit grid, range 1, coefficients 0.2/0.1."""
    return build_var_model(3, 1.0, 0.2, 0.1)


@pytest.fixture(scope="session")
def unit_lag_set():
    return LagSet((IsotropicLag(1.0, 0), IsotropicLag(1.0, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(202406)
