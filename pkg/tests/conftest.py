import numpy as np
import pytest

from spin1_nqs.hilbert import enumerate_sz0_basis

AKLT = float(np.arctan(1.0 / 3.0))


@pytest.fixture(scope="session")
def basis4():
    return enumerate_sz0_basis(4)


@pytest.fixture(scope="session")
def basis6():
    return enumerate_sz0_basis(6)


@pytest.fixture(scope="session")
def basis8():
    return enumerate_sz0_basis(8)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
