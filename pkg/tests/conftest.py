import pytest

_RESULTS = []


@pytest.fixture
def criterion(capsys):
    """Call ``criterion(number, title, ok, detail)`` to log one acceptance line."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        _RESULTS.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_RESULTS):
            terminalreporter.write_line(line)
