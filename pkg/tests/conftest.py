import time

import numpy as np
import pytest

from asv_empc.controllers import ControllerConfig
from asv_empc.sim import default_scenario, run_closed_loop
from asv_empc.vessel import preset


class RunCache:
    """Closed-loop runs shared across test modules; each (condition, variant, overrides) runs once."""

    def __init__(self):
        self._runs = {}
        self.wall = {}

    def get(self, condition, variant, **overrides):
        key = (condition, variant, tuple(sorted(overrides.items())))
        if key not in self._runs:
            sc = default_scenario(condition).replace(**overrides)
            t0 = time.perf_counter()
            self._runs[key] = run_closed_loop(sc, ControllerConfig(variant=variant))
            self.wall[key] = time.perf_counter() - t0
        return self._runs[key]

    def wall_time(self, condition, variant, **overrides):
        self.get(condition, variant, **overrides)
        return self.wall[(condition, variant, tuple(sorted(overrides.items())))]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture
def params():
    return preset("sim")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_LINES = []


@pytest.fixture
def report(request):
    """Record one acceptance line and assert it."""

    def _report(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
