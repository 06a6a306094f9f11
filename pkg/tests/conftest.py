import numpy as np
import pytest

from fracspec.coefficient import solve_problem
from fracspec.discretization import Grid, assemble_1d, assemble_2d_square

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def record():
    """Print and collect one PASS/FAIL line per acceptance criterion."""

    def _record(number, name, passed, detail):
        line = f"[{number:2d}] {'PASS' if passed else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


@pytest.fixture(scope="session")
def square_pair():
    """s = 1/2 on [-1, 1]^2, n = 24: the second/third eigenvalues form a pair."""
    op = assemble_2d_square(0.5, (-1.0, 1.0), 24)
    p = solve_problem(op)
    return p, p.cluster(1)


@pytest.fixture(scope="session")
def interval_problems():
    """s = 1/2 on [-1, 1] at n = 128, 256, 512."""
    return {n: solve_problem(assemble_1d(0.5, (-1.0, 1.0), n), window=(0, 4)) for n in (128, 256, 512)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def small_interval(n=32, s=0.5, lo=-1.0, hi=1.0):
    return assemble_1d(s, (lo, hi), n)


def small_square(n=10, s=0.5, lo=-1.0, hi=1.0):
    return assemble_2d_square(s, (lo, hi), n)


__all__ = ["Grid", "small_interval", "small_square"]
