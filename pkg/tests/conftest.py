import numpy as np
import pytest

from pgtsim.core import TestDesign


@pytest.fixture
def three_test_design():
    # tests {0,1}, {1,2}, {2,3} over four items
    return TestDesign.from_test_lists(4, [[0, 1], [1, 2], [2, 3]])


@pytest.fixture
def rng():
    return np.random.default_rng(20201015)


ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed at session end."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
