import numpy as np
import pytest

from stochcollapse.params import PhysParams, derive_constants


@pytest.fixture
def p():
    return PhysParams()


@pytest.fixture
def d(p):
    return derive_constants(p)


_REPORTS: list[str] = []


def report(name: str, ok: bool, detail: str) -> None:
    """One PASS/FAIL line per acceptance criterion, repeated in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    _REPORTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _REPORTS:
        terminalreporter.section("acceptance criteria")
        for line in _REPORTS:
            terminalreporter.write_line(line)


def rel_l2(a, b, dx):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * dx / (np.sum(np.abs(b) ** 2) * dx)))
