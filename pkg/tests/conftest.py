import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_sim():
    from obliqforest.simgen import SimConfig, simulate

    return simulate(SimConfig(n=300, n_per_class=3, seed=11))


@pytest.fixture(scope="session")
def small_forest(small_sim):
    from obliqforest import forest as F

    return F.fit(small_sim.ds, F.ForestParams(n_tree=40, seed=3), n_threads=2)


def separable(n=200, seed=0, censor=False):
    """Two survival groups fully determined by column 0; column 1 is noise."""
    r = np.random.default_rng(seed)
    g = np.arange(n) % 2
    x0 = g + r.normal(0, 0.1, n)
    X = np.column_stack([x0, r.normal(size=n)])
    time = np.where(g == 1, r.uniform(1, 2, n), r.uniform(3, 4, n))
    status = np.ones(n, dtype=int)
    if censor:
        status[r.uniform(size=n) < 0.2] = 0
        status[0] = 1
    return X, time, status


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
