import pytest
from hypothesis import HealthCheck, settings

from spinwave import gem

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60)
settings.load_profile("default")


@pytest.fixture
def small_config():
    """Cheap engine configuration: 12 us period, 1 MHz bandwidth, coarse grid."""
    return gem.GemConfig.from_beta(0.1, bandwidth=1e6, period=12e-6, count=4, n_z=128)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
