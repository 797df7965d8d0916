import numpy as np
import pytest

from slln_semigroups.ensemble import two_point_ensemble

from factories import fixed_noncommuting


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_point():
    return fixed_noncommuting()


@pytest.fixture
def commuting_two_point():
    L0 = np.diag([1.0, 2.0, 3.0])
    B = np.diag([0.5, -0.3, 0.2])
    return two_point_ensemble(L0, B)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance(capsys):
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
        _ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
