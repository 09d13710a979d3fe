from datetime import datetime

import numpy as np
import pytest

from assimkit.grid import GridSpec, StateField, make_channel_registry

T0 = datetime(2022, 1, 1, 0)


def random_state(grid, registry, rng, valid_time=T0, kind="analysis", scale=1.0):
    data = rng.normal(0, scale, (len(registry), *grid.shape))
    return StateField(grid, registry, data, valid_time, kind)


@pytest.fixture
def small_grid():
    return GridSpec.from_shape(16, 32)


@pytest.fixture
def registry69():
    return make_channel_registry(include_precip=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
