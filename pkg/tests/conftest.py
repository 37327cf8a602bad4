import numpy as np
import pytest

from surfphase.field import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid8():
    return GridSpec(8, 8.0)


@pytest.fixture
def grid16():
    return GridSpec(16, 2 * np.pi)
