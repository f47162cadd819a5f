"""Collects one verdict line per acceptance criterion and prints them at the end."""

VERDICTS: dict[int, str] = {}


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    VERDICTS[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    print(VERDICTS[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
