import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lab", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lab")

# One line per acceptance criterion, filled by tests/test_acceptance.py.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cvec(rng, d, scale=1.0):
    return scale * (rng.standard_normal(d) + 1j * rng.standard_normal(d))
