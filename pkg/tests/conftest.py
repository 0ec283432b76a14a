import pytest

_LINES = {}


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def _report(number, ok, detail):
        number = str(number)
        _LINES[number] = f"criterion {number:>3}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_LINES[number])
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    # natural order: 1, 2, ..., 7a, 7b, 7c, 8, 9, 10
    for k in sorted(_LINES, key=lambda s: (int(s.rstrip("abc")), s)):
        terminalreporter.write_line(_LINES[k])
