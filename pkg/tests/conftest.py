"""Shared closed-loop runs; each full run takes several seconds, so they are
computed once per session and reused by the sim, cli and acceptance tests."""

import time

import pytest

from tcbf_transfer.cli import PACKAGED, data_path
from tcbf_transfer.config import load_scenario
from tcbf_transfer.sim import engine


def _timed_run(scenario, plan=None):
    t0 = time.perf_counter()
    log = engine.run(scenario, plan)
    return log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def fixture_scenario():
    return load_scenario(data_path(PACKAGED["fixture"]))


@pytest.fixture(scope="session")
def fixture_plan(fixture_scenario):
    return engine.plan(fixture_scenario)


@pytest.fixture(scope="session")
def fixture_runs(fixture_scenario, fixture_plan):
    """{mode: (scenario, log, seconds)} for both modes on the fixture."""
    out = {}
    for mode in ("nominal", "filtered"):
        sc = fixture_scenario.replace(mode=mode)
        log, secs = _timed_run(sc, fixture_plan)
        out[mode] = (sc, log, secs)
    return out


@pytest.fixture(scope="session")
def free_space_scenario():
    return load_scenario(data_path(PACKAGED["free_space"]))


@pytest.fixture(scope="session")
def free_space_runs(free_space_scenario):
    plan = engine.plan(free_space_scenario)
    out = {}
    for mode in ("nominal", "filtered"):
        sc = free_space_scenario.replace(mode=mode)
        out[mode] = (sc,) + _timed_run(sc, plan)
    return out


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
