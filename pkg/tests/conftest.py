import numpy as np
import pytest

from crfrefine.core import CrfParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def defaults():
    return CrfParams()


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
