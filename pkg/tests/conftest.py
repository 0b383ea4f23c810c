import re

import pytest

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one acceptance line; the test still asserts on its own."""
    lines = request.config.stash[ACCEPTANCE]

    def _report(number, title, ok, detail=""):
        lines.append((number, f"criterion {number:<3} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()))
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda x: (int(re.match(r"\d+", str(x[0])).group()), str(x[0]))):
        terminalreporter.write_line(line)
