import numpy as np
import pytest

from slgpopt import Dataset, SLGPModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def model_q1():
    return SLGPModel.create(q=1)


@pytest.fixture
def model_q2():
    return SLGPModel.create(q=2, n_grid=51)


@pytest.fixture
def small_data(rng):
    return Dataset(rng.random(12), rng.beta(2.0, 5.0, 12))


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

