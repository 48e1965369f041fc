import numpy as np
import pytest

from pshlab.measure_core import Grid1D


@pytest.fixture(scope="session")
def grid():
    return Grid1D.default()


@pytest.fixture(scope="session")
def small_grid():
    return Grid1D.uniform(-20.0, 20.0, 2001)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
