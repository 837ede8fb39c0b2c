"""Shared fixtures: the two mini scenarios and their synthesis artifacts.

Building a grid abstraction takes tens of seconds, so everything derived from
a scenario is session-scoped and shared between the unit and acceptance
tests.  Nothing here mutates the shared objects.
"""

import numpy as np
import pytest

from dyntsp.scenarios import load_scenario
from dyntsp.synthesis import (build_cost_matrix, shrink_fixed_point,
                              synthesize_for_tour)
from dyntsp.atsp import ATSPInstance, solve_exact, solve_heuristic


_VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    """Record one pass/fail line per acceptance criterion; printed at the end."""

    def record(num, ok, detail):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}"
        _VERDICTS.append((num, line))
        print(f"\n{line}")
        assert ok, f"criterion {num} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def uav_scenario():
    return load_scenario("uav-mini")


@pytest.fixture(scope="session")
def uav_system(uav_scenario):
    return uav_scenario.build_abstraction()


@pytest.fixture(scope="session")
def uav_shrunk(uav_scenario, uav_system):
    targets = uav_scenario.target_state_sets()
    shrunk, values = shrink_fixed_point(uav_system, targets)
    return shrunk, values


@pytest.fixture(scope="session")
def uav_synthesis(uav_scenario, uav_system, uav_shrunk):
    shrunk, values = uav_shrunk
    C = build_cost_matrix(shrunk, values)
    tour = solve_exact(ATSPInstance(C))
    return synthesize_for_tour(uav_system, shrunk, values, C, tour,
                               grid_hash=uav_scenario.grid.metadata_hash())


@pytest.fixture(scope="session")
def truck_scenario():
    return load_scenario("truck-mini")


@pytest.fixture(scope="session")
def truck_system(truck_scenario):
    return truck_scenario.build_abstraction()


@pytest.fixture(scope="session")
def truck_shrunk(truck_scenario, truck_system):
    targets = truck_scenario.target_state_sets()
    shrunk, values = shrink_fixed_point(truck_system, targets)
    return shrunk, values


@pytest.fixture(scope="session")
def truck_synthesis(truck_scenario, truck_system, truck_shrunk):
    shrunk, values = truck_shrunk
    C = build_cost_matrix(shrunk, values)
    tour = solve_heuristic(ATSPInstance(C), seed=truck_scenario.seed)
    return synthesize_for_tour(truck_system, shrunk, values, C, tour,
                               grid_hash=truck_scenario.grid.metadata_hash())
