import numpy as np
import pytest

from eiktomo.grid import AcquisitionGeometry, Grid2D


@pytest.fixture(scope="session")
def grid01():
    return Grid2D.centered(0.8, 0.01)


@pytest.fixture(scope="session")
def grid02():
    return Grid2D.centered(0.8, 0.02)


@pytest.fixture(scope="session")
def standard_geometry():
    return AcquisitionGeometry(0.75, 18, 153)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; lines are echoed and summarised at the end."""

    def emit(label, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return emit


@pytest.fixture
def note():
    def emit(label, detail):
        line = f"[INFO] {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
