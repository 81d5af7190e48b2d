import numpy as np
import pytest

from oamsim.optics import make_grid


@pytest.fixture(scope="session")
def small_grid():
    # coarse but still resolves |l| <= 4 rings
    return make_grid(128, 12.0)


@pytest.fixture(scope="session")
def default_grid():
    return make_grid(256, 12.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stochastic(rng, d, sparsity=0.0):
    m = rng.random((d, d)) ** 3
    if sparsity:
        m[rng.random((d, d)) < sparsity] = 0.0
        m[rng.integers(d, size=d), np.arange(d)] += 1e-3
    return m / m.sum(axis=0, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
