"""Shared fixtures and the acceptance-criteria reporting hook."""

import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion_report():
    """Record one PASS/FAIL line per acceptance criterion and assert it.

    The lines are replayed in the terminal summary so the verdicts are
    visible regardless of output capturing.
    """

    def report(number, ok, detail):
        line = f"[criterion {number:02d}] {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
