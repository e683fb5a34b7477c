import os
import sys

import pytest

# the oracle module lives next to the tests
sys.path.insert(0, os.path.dirname(__file__))

_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record ``(criterion number, passed, detail)`` for the end-of-run summary."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _VERDICTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
