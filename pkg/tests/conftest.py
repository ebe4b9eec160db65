import os

import pytest
from hypothesis import HealthCheck, settings

from ftlbench import FlashGeometry

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DESK = FlashGeometry(2, 2, 1, 64, 64)

# acceptance verdict lines, echoed in the terminal summary
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def desk():
    return DESK


@pytest.fixture
def small():
    """4 chips, 32 blocks of 32 pages: big enough for every FTL at 25% OP."""
    return FlashGeometry(2, 2, 1, 32, 32)


@pytest.fixture
def tiny():
    """The 2 x 2 x 1 x 2 x 4 geometry used for hand-checked codec values."""
    return FlashGeometry(2, 2, 1, 2, 4)
