"""Shared pytest hooks: echo the acceptance checklist at the end of a run."""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance checklist")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
