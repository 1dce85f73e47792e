import pytest

_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one acceptance line: ``report(number, ok, detail)``."""

    def _report(number, ok, detail):
        _ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
