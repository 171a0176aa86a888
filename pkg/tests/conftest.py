import time

import pytest

from moescale.arch import PRESETS
from moescale.tables import load_tables

_START = time.perf_counter()


@pytest.fixture(scope="session")
def tables():
    return load_tables()


@pytest.fixture(scope="session")
def p18():
    return PRESETS["1e18"]


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    elapsed = time.perf_counter() - _START
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(k)):
        ok, line = RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {line}")
    terminalreporter.write_line(f"suite wall-clock {elapsed:.1f} s (budget 60 s)")
