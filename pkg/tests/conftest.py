import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hcfbidi.constellation import build_gmi_table, square_qam
from hcfbidi.reporting import bundled_scenario

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scenario():
    return bundled_scenario()


@pytest.fixture(scope="session")
def plan(scenario):
    return scenario.plan


@pytest.fixture(scope="session")
def small_table(scenario):
    """Coarse GMI table over the bundled constellations, cheap enough for unit tests."""
    return build_gmi_table(scenario.constellations.values(), np.arange(0.0, 34.0, 4.0),
                           n_samples=4000, seed=1)


@pytest.fixture(scope="session")
def qam16():
    return square_qam(16)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    verdicts = getattr(mod, "VERDICTS", {})
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
