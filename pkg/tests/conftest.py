import numpy as np
import pytest

from pwabarrier.search import synthesize
from pwabarrier.systems import pendulum_analogue, square_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def square():
    return square_fixture(-1.0)


@pytest.fixture(scope="session")
def unstable_square():
    return square_fixture(+1.0)


@pytest.fixture(scope="session")
def square_result(square):
    return synthesize(square, 1.0, budget_s=60)


@pytest.fixture(scope="session")
def pendulum():
    return pendulum_analogue()


@pytest.fixture(scope="session")
def pendulum_result(pendulum):
    return synthesize(pendulum, 0.2, budget_s=300)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
