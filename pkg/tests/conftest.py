import numpy as np
import pytest

from bevfuse.numerics import precision


@pytest.fixture
def f64():
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA: list[str] = []


@pytest.fixture
def record_criterion():
    """Collect one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        _CRITERIA.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
