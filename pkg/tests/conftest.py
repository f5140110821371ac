import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bsdelab import make_grid, sample_brownian

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# acceptance lines collected here are replayed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_ensemble():
    return sample_brownian(make_grid(20), 1, 4000, seed=11)


@pytest.fixture(scope="session")
def ensemble_2d():
    return sample_brownian(make_grid(16), 2, 3000, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
