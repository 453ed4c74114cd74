import pytest

_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one verdict line; lines are echoed again in the terminal summary."""
    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        print(line)
        _LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
