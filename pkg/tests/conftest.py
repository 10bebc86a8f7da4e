"""Shared test fixtures: the acceptance-criterion recorder.

Acceptance tests register one line per criterion; after the run pytest
prints a summary section so pass/fail status per criterion is visible
without digging through the traceback list.
"""

import pytest

_RESULTS = []


@pytest.fixture
def criterion():
    """Recorder: criterion(num, label, ok, detail) -> ok."""

    def record(num, label, ok, detail=""):
        _RESULTS.append((str(num), label, bool(ok), str(detail)))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, ok, detail in _RESULTS:
        word = "PASS" if ok else "FAIL"
        line = f"{word}  criterion {num:<4} {label}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
