import sys

import numpy as np
import pytest

from donskerfbm.driver import DriverPath
from donskerfbm.noise import NoiseLaw, RandomWalkNoise


@pytest.fixture
def path2():
    """A two-component X^eps realization at a non-snapped eps."""
    return DriverPath(RandomWalkNoise(0.13, NoiseLaw.rademacher(), 2, seed=11, sample=3), 0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
