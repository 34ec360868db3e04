"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
import pytest

CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        CRITERIA[number] = (bool(passed), detail)
        assert passed, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
