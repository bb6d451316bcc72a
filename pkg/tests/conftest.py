import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def emit(criterion, label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] C{criterion} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
