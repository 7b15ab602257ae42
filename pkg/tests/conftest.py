import numpy as np
import pytest

from r2rac.feedforward import ControllerParams
from r2rac.params import NOMINAL


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def theta_nom():
    return ControllerParams.nominal(NOMINAL)


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
