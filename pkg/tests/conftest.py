import numpy as np
import pytest

from wavezoom import SpatialGrid, default_bank, default_grid


@pytest.fixture(scope="session")
def bank():
    return default_bank()


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def small_grid():
    return SpatialGrid(256, 40.0)


@pytest.fixture(scope="session")
def mid_grid():
    return SpatialGrid(512, 40.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240615)
