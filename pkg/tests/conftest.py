import numpy as np
import pytest

from decnn.tensor import Rng


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
