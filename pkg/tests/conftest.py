import sys
import time

import pytest

from concavedeconv import (
    RateStudyConfig,
    make_exponential,
    make_triangular,
    make_uniform01,
    rate_study,
    sample,
    sqrt5_truth,
)


@pytest.fixture(scope="session")
def exponential():
    return make_exponential()


@pytest.fixture(scope="session")
def triangular():
    return make_triangular()


@pytest.fixture(scope="session")
def uniform01():
    return make_uniform01()


@pytest.fixture(scope="session")
def truth():
    return sqrt5_truth()


@pytest.fixture
def small_sample(truth, exponential):
    return sample(truth, exponential, 10, 42)


@pytest.fixture(scope="session")
def default_rate_study():
    """The full default study, timed; shared by the tests that need it."""
    t0 = time.perf_counter()
    res = rate_study(RateStudyConfig())
    return res, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
