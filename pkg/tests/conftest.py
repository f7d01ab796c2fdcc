import numpy as np
import pytest

from msllr.dictionary import build_default_grid, build_dictionary
from msllr.sequence import generate_fisp_schedule


@pytest.fixture(scope="session")
def seq60():
    return generate_fisp_schedule(60, seed=0)


@pytest.fixture(scope="session")
def dict60(seq60):
    return build_dictionary(build_default_grid(), seq60)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
