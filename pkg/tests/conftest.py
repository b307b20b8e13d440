"""Shared pytest hooks: collect acceptance lines and echo them at the end."""

from __future__ import annotations

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    """Stash a criterion verdict for the terminal summary."""
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
