import numpy as np
import pytest

from crossdiff import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shapes128():
    return synthetic.generate_synthetic("shapes", 128, 1)


@pytest.fixture(scope="session")
def texture128():
    return synthetic.generate_synthetic("texture", 128, 1)


def smooth_bump(n, width=5.0, amplitude=100.0):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    c = (n - 1) / 2
    return amplitude * np.exp(-((x - c) ** 2 + (y - c) ** 2) / (2 * width**2))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
