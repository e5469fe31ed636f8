import numpy as np
import pytest

from coaglin.core import ModelParams, build_grid, canonical_profile

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def profile(params):
    return canonical_profile(params)


@pytest.fixture(scope="session")
def grid():
    return build_grid(-6, 6, 16)


def bump(x, a=1.0, b=2.0):
    """(4 (x-a)(b-x) / (b-a)^2)^4 on (a, b), zero elsewhere."""
    x = np.asarray(x, dtype=float)
    s = 4 * np.clip((x - a) * (b - x), 0, None) / (b - a) ** 2
    return np.where((x > a) & (x < b), s**4, 0.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
