"""Shared fixtures: reference parameter sets used as formula inputs."""

import functools

import numpy as np
import pytest
from hypothesis import settings

from carmaspot.carma import CarmaParams
from carmaspot.nig import NigParams
from carmaspot.seasonality import SeasonalityParams
from carmaspot.stable import StableParams

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

BASE_CARMA = CarmaParams((1.4854, 0.0911), (0.2861, 1.0))
PEAK_CARMA = CarmaParams((2.3335, 0.2263), (0.6127, 1.0))
BASE_DRIVER = StableParams(1.6524, 0.3911, 6.4072, 0.0)
PEAK_DRIVER = StableParams(1.3206, 0.0652, 6.5199, 0.0)
BASE_NIG = NigParams(0.6451, 0.0998, 0.2206, -0.0346)
PEAK_NIG = NigParams(0.2371, -0.0083, 0.6582, 0.0230)
BASE_SEASON = SeasonalityParams("base", (19.4859, 0.0217, -2.8588, 0.6386, -6.7867, 2.8051))
PEAK_SEASON = SeasonalityParams("peak", (30.7642, 0.0349, -2.5748, 1.5762))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def base_long_path(n_obs: int = 10 ** 5, seed: int = 2024):
    """Base-load CARMA(2,1) with the reference stable driver, fine step 0.01, daily observations."""
    from carmaspot.carma import simulate_carma

    return simulate_carma(BASE_CARMA, BASE_DRIVER, n_obs - 1, 0.01, 1.0, np.random.default_rng(seed))


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
