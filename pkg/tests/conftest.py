import numpy as np
import pytest

from helmgcm.grid import Box, make_grid

# lines printed by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_grid():
    """8 x 8 x 8 nodes on a unit-ish cube."""
    return make_grid(Box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)), 1.0 / 7)
