import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""

    def _report(name: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


@pytest.fixture
def note():
    """Record an informational line that is reported but never asserted."""

    def _note(text: str) -> None:
        _ACCEPTANCE_LINES.append(f"[INFO] {text}")
        print(f"[INFO] {text}")

    return _note


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
