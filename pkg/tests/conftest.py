from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seeqr.instruments import Dataset

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def linear_data(rng, n=200, d=2, q=0.5, noise="normal"):
    """Exogenous design Y = X beta + U with an intercept column."""
    x = np.column_stack([np.ones(n), rng.uniform(-2, 2, size=(n, d - 1))])
    beta = rng.normal(size=d)
    u = rng.standard_normal(n) if noise == "normal" else rng.standard_t(3, n)
    return Dataset(x @ beta + u, x, x.copy(), q), beta


@pytest.fixture
def small_data(rng):
    return linear_data(rng)[0]


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
