from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def scalar_confounded():
    """m=1, f=1, T=1, eps=1, sigma=1, tau=0, kappa=1: population OLS slope 1.5."""
    from causalda.sem import SemSpec

    return SemSpec([0.0], [1.0], np.zeros((1, 0)), [[1.0]], [1.0], 1.0, 1.0)


@pytest.fixture
def scalar_valid_iv():
    """X = Z + C + N_X, Y = X + C + N_Y with unit variances."""
    from causalda.sem import SemSpec

    return SemSpec([0.0], [1.0], [[1.0]], [[1.0]], [1.0], 1.0, 1.0)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_report(request):
    """Dict shared across the session: criterion number -> printed line."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        terminalreporter.write_line(lines[num])
