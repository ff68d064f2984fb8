import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Record one acceptance line: ``report(n, title, passed, detail)``."""

    def _report(n, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {n:>2}: {title} -- {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
