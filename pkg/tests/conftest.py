import numpy as np
import pytest

from topodisc.tessellation import TileMeasure

_ACCEPTANCE = []


def random_measure(n, rng, alpha=1.0):
    return TileMeasure(n, rng.dirichlet(np.full(1 << n, alpha)))


@pytest.fixture
def example2():
    """N=2 measure: mass[∅]=0.4, mass[{1}]=mass[{2}]=mass[{1,2}]=0.2."""
    return TileMeasure(2, [0.4, 0.2, 0.2, 0.2])


@pytest.fixture
def report_criterion():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
