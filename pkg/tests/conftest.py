import numpy as np
import pytest

from dynsur.series import TimeGrid, Trajectory


@pytest.fixture
def grid():
    return TimeGrid(0.0, 0.01, 301)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_trajectory(grid, values, label="x"):
    return Trajectory(grid, np.asarray(values, dtype=float), label)
