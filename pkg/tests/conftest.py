"""Shared pytest wiring: surfaces acceptance verdict lines in the summary."""

import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criteria_log() -> list:
    """Sink for one pass/fail line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.line(line)
