import math
import warnings

import pytest
from hypothesis import HealthCheck, settings

from holobeam.rhs import RhsConfig

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LAM = 0.01  # 30 GHz


@pytest.fixture
def pareto_cfg():
    """50 elements at lambda/3 on one row, one RF chain."""
    return RhsConfig(1, 50, LAM / 3, LAM)


@pytest.fixture(autouse=True)
def _quiet_spacing_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="element spacing exceeds half a wavelength")
        yield


def deg(x):
    return math.radians(x)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
