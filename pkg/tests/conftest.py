"""Shared pytest wiring for the acceptance suite.

The acceptance tests append one verdict line per criterion; the terminal
summary hook prints the block after the run so the verdicts are visible
in plain `pytest -v` output, pass or fail.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
