"""Collects one verdict line per acceptance criterion and prints them at the end."""
import pytest

VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    def record(name: str, passed: bool, detail: str) -> None:
        VERDICTS[name] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(VERDICTS, key=lambda s: int(s[2:].split()[0]) if s[2:].split()[0].isdigit() else 99):
        ok, detail = VERDICTS[name]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
