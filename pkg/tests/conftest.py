import os

os.environ.setdefault("SAPASIM_WORKERS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import HealthCheck, settings  # noqa: E402

from sapasim import model, scans  # noqa: E402

settings.register_profile(
    "sapasim", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("sapasim")

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def reference():
    return model.reference_system()


@pytest.fixture(scope="session")
def calibration(reference):
    """Pump amplitude giving the reference parametric gain (computed once)."""
    return scans.calibrate_pump(reference)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
