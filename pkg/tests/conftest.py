import pytest

ACCEPTANCE_LINES: list[tuple[str, str]] = []


@pytest.fixture
def record_criterion():
    """Append a one-line verdict for the acceptance summary."""

    def record(label: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append((label, f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
