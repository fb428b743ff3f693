import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then fail the test if the criterion failed."""

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
