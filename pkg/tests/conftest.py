import time

import numpy as np
import pytest

from subriem.scenarios import load

SUITE_BUDGET = 120.0
_VERDICTS = pytest.StashKey[list]()
_START = pytest.StashKey[float]()


def pytest_configure(config):
    config.stash[_START] = time.perf_counter()
    config.stash[_VERDICTS] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash.get(_VERDICTS, []))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in lines:
        terminalreporter.write_line(line)
    elapsed = time.perf_counter() - config.stash[_START]
    ok = elapsed < SUITE_BUDGET
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'} criterion 11: session wall time {elapsed:.1f}s (< {SUITE_BUDGET:.0f}s)"
    )


@pytest.fixture
def verdict(request):
    """Record a criterion outcome for the summary, then assert it."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        request.config.stash[_VERDICTS].append((number, line))
        print(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def heisenberg():
    return load("heisenberg")


@pytest.fixture(scope="session")
def martinet():
    return load("martinet")


@pytest.fixture(scope="session")
def skew():
    return load("skew_heisenberg")


@pytest.fixture(scope="session")
def hopf():
    return load("hopf_su2")


@pytest.fixture(scope="session")
def ym():
    return load("ym_plane_so3")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
