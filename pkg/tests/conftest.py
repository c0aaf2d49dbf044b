import warnings

import pytest

from jpa3d.config import DeviceConfig
from jpa3d.constants import TWO_PI
from jpa3d.errors import DispersiveRegimeWarning
from jpa3d.spectrum import CavityMode, calibrate_circuit
from jpa3d.squid import SquidParams

KAPPA_EXT = TWO_PI * 1.1e6
KAPPA_INT = TWO_PI * 0.42e6


@pytest.fixture(scope="session")
def calibration():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DispersiveRegimeWarning)
        return calibrate_circuit(SquidParams(), KAPPA_INT, KAPPA_EXT)


@pytest.fixture(scope="session")
def circuit(calibration):
    return calibration.circuit


@pytest.fixture(scope="session")
def device():
    return DeviceConfig.from_path(None)


@pytest.fixture
def ref_cavity():
    return CavityMode(TWO_PI * 8.213e9, KAPPA_INT, KAPPA_EXT)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
