"""Shared fixtures and the acceptance-summary reporting hook."""

import numpy as np
import pytest

from slabwald.core import ChargeSystem
from slabwald.harness import gen_system

# Lines registered by tests/test_acceptance.py; echoed after the run so the
# one-line-per-criterion verdicts are visible even with output capture on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_system():
    """Six charges, neutral, kept away from the walls."""
    sys6 = gen_system(7, composition=((2, 2.0), (4, -1.0)),
                      geometry=(10.0, 10.0, 1.0))
    pos = sys6.positions.copy()
    pos[:, 2] = 0.1 + 0.8 * pos[:, 2]  # margin from the interfaces
    return ChargeSystem(pos, sys6.charges, sys6.cell)


@pytest.fixture
def pair_system():
    """A +1/-1 pair at generic positions."""
    pos = np.array([[1.3, 2.2, 0.35], [4.1, 7.9, 0.72]])
    return ChargeSystem(pos, np.array([1.0, -1.0]), (10.0, 10.0, 1.0))
