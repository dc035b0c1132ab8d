import numpy as np
import pytest

from bqclab.potential import LennardJones, Morse

# lines collected by the acceptance suite, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def lj():
    return LennardJones()


@pytest.fixture
def morse():
    return Morse()


@pytest.fixture(params=["lj", "morse"])
def potential(request):
    return LennardJones() if request.param == "lj" else Morse()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
