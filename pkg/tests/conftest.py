"""Shared pytest plumbing.

The acceptance module records one verdict line per criterion; echoing them
in the terminal summary keeps the verdicts visible even though pytest
captures per-test stdout.
"""

criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in criterion_lines:
            terminalreporter.write_line(line)
