"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import pytest

from layoutslam.sim import generate_world

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def corridor_world():
    """4 m x 10 m corridor, 2.5 m high."""
    return generate_world({"primitives": [{"type": "corridor", "origin": [0, 0], "width": 4, "length": 10, "height": 2.5}]})
