import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def street_a_data():
    from v2ivision import pipeline, scenarios

    return pipeline.build_scenario(scenarios.street_a(), scenarios.RX_VAN)


@pytest.fixture(scope="session")
def street_b_data():
    from v2ivision import pipeline, scenarios

    return pipeline.build_scenario(scenarios.street_b(), scenarios.RX_VAN)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    lines = acceptance_log.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
