import pytest

from erhoq.spin_model import HamiltonianParams, Schedule

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(name, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def quench_schedule():
    return Schedule.quench(HamiltonianParams(1.0, 1.0, 0.0), HamiltonianParams(1.0, -1.0, 0.0))


@pytest.fixture
def spin_schedule():
    return Schedule.quench(HamiltonianParams(1.0, 1.0, 1.0), HamiltonianParams(1.0, -1.0, 1.0))
