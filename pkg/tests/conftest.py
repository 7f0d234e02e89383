"""Shared fixtures for the test suite.

Output capture swallows plain prints from passing tests, so the acceptance
gate records its per-criterion summary lines on the session stash and echoes
them in the terminal summary after the run.
"""

import pytest

_GATE_LINES = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    lines = request.config.stash.setdefault(_GATE_LINES, [])

    def _report(number: int, name: str, ok: bool, detail: str) -> str:
        line = (f"CRITERION {number} {name}: "
                f"{'PASS' if ok else 'FAIL'} ({detail})")
        print(line)
        lines.append((number, line))
        return line

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_GATE_LINES, None)
    if lines:
        terminalreporter.section("acceptance gate")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
