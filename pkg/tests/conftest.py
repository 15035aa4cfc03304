import numpy as np
import pytest


def central_diff(fn, x, h=1e-5):
    """Central finite differences of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def random_ground(rng, C):
    """Random symmetric, zero-diagonal, nonnegative matrix (not necessarily a metric)."""
    A = np.triu(rng.random((C, C)), 1)
    return A + A.T


def interior_simplex(rng, C, floor=0.1):
    # keeps every entry >= floor/C so the h=1e-5 difference of log p stays accurate
    return (1 - floor) * rng.dirichlet(np.ones(C)) + floor / C


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
