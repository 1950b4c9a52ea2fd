import pytest

from anomalyflow.initial import balanced_psi, conformal
from anomalyflow.lattice import GridSpec


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(16, ("x1",))


@pytest.fixture(scope="session")
def balanced16(grid16):
    return balanced_psi(grid16, 0.01, "x1")


@pytest.fixture(scope="session")
def conformal16(grid16):
    return conformal(grid16, 0.1, "x1")


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line for an acceptance criterion and return the verdict."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(line)
        _ACCEPTANCE.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
