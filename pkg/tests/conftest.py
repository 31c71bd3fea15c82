"""Shared test plumbing: the acceptance-criteria reporter.

Acceptance tests register one PASS/FAIL line each; the lines are printed
immediately (visible with ``pytest -s`` or on failure) and again in a
dedicated section of the terminal summary so a plain ``pytest -v`` run
always shows the verdict table.
"""

import pytest

_ACCEPTANCE_LINES = []
_TABLE_LINES = []


@pytest.fixture
def acceptance_report():
    """Callable(criterion, name, ok, detail) -> asserts ok after recording."""

    def report(criterion: int, name: str, ok: bool, detail: str = ""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {criterion} ({name}): {status}"
        if detail:
            line += f" — {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


@pytest.fixture
def acceptance_table():
    """Callable(list-of-lines) -> emitted under the benchmark table section."""

    def emit(lines):
        _TABLE_LINES.extend(lines)
        for line in lines:
            print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.line(line)
    if _TABLE_LINES:
        terminalreporter.section("benchmark per-cell table")
        for line in _TABLE_LINES:
            terminalreporter.line(line)
