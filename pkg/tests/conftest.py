"""Shared pytest plumbing.

The acceptance tests append one line per criterion to ``acceptance_lines``;
the hook below replays them in the terminal summary so the pass/fail verdicts
survive output capturing.
"""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
