import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        request.config._acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
