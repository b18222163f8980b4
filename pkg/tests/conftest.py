from __future__ import annotations

import pytest

_LINES: list = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line and assert it.

    ``verdict(label, ok, summary)`` appends ``PASS``/``FAIL`` with the summary
    to the list printed at the end of the session, prints it immediately and
    fails the test when ``ok`` is false.
    """

    def record(label: str, ok: bool, summary: str):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {summary}"
        _LINES.append(line)
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
