import pytest
from hypothesis import HealthCheck, settings

from helpers import ACCEPTANCE_LINES
from piecelab.spectra import Potential, fit_asymptotics

settings.register_profile("piecelab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("piecelab")

FIT_LENGTHS = (20.0, 40.0, 80.0)


@pytest.fixture(scope="session")
def step_U():
    return Potential.step(1.0, 1.0)


@pytest.fixture(scope="session")
def fits(step_U):
    """gamma and sigma(d) of the step potential fitted on l in {20, 40, 80} (about a minute)."""
    return fit_asymptotics(step_U, FIT_LENGTHS)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
