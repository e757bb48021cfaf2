"""Shared fixtures: cached problem builds and the acceptance scoreboard."""

from __future__ import annotations

import pytest

from dismantle.assembly_io import synthetic_problem


@pytest.fixture(scope="session")
def problems():
    """Memoized synthetic problem builder.

    SDF construction dominates test wall time, so every test that can
    share a geometry instance should.  Problems are immutable; planners
    never write into them.
    """
    cache = {}

    def get(family: str, sdf_resolution: int = 64, **params):
        key = (family, sdf_resolution, tuple(sorted(params.items())))
        if key not in cache:
            cache[key] = synthetic_problem(family,
                                           sdf_resolution=sdf_resolution,
                                           **params)
        return cache[key]

    return get


class _Scoreboard:
    """Collects acceptance-criterion verdicts for the terminal summary."""

    def __init__(self):
        self.rows = {}

    def record(self, number: int, passed: bool, detail: str) -> None:
        self.rows[number] = (passed, detail)

    def check(self, number: int, passed: bool, detail: str) -> None:
        """Record then assert, so failures still print a scoreboard line."""
        self.record(number, passed, detail)
        assert passed, f"criterion {number}: {detail}"


_SCOREBOARD = _Scoreboard()


@pytest.fixture(scope="session")
def scoreboard():
    return _SCOREBOARD


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _SCOREBOARD.rows:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_SCOREBOARD.rows):
        passed, detail = _SCOREBOARD.rows[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[criterion-{number}] {verdict}: {detail}")
