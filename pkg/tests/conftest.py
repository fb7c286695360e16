import numpy as np
import pytest

from semiweak_lgi.meter import calibrated_meter
from semiweak_lgi.qstate import random_density_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def meter():
    return calibrated_meter()


def random_states(rng, n):
    return [random_density_matrix(rng, 4, rank=int(rng.integers(1, 5))) for _ in range(n)]


_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one pass/fail line per acceptance criterion, printed in the terminal summary."""

    def _record(number, ok, detail):
        _ACCEPTANCE[number] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
