import warnings

import numpy as np
import pytest

from scatphase.numgrid import Grid


@pytest.fixture(autouse=True)
def _quiet_scattering_warnings():
    from scatphase.errors import ScatteringWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScatteringWarning)
        yield


@pytest.fixture(scope="session")
def grid12():
    return Grid(12.0, 512)


@pytest.fixture(scope="session")
def kband():
    return np.linspace(0.05, 20.0, 200)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
