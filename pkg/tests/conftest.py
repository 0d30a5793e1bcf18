"""Collects the one-line verdicts emitted by the acceptance suite and prints
them together at the end of the run, so they survive output capturing."""

VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
