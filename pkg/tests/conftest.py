import sys

import numpy as np
import pytest

from krpsgd.tensor import DenseTensor, KruskalModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cube_1_to_8():
    """2x2x2 tensor holding 1..8 in storage order."""
    return DenseTensor((2, 2, 2), np.arange(1.0, 9.0))


def small_model(rng, dims=(3, 4, 2), rank=2, low=-1.0, high=1.0):
    return KruskalModel(tuple(rng.uniform(low, high, size=(d, rank)) for d in dims))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
