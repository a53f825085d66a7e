import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wifi_hpd.core import SensingConfig

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

C = 3.0e8


@pytest.fixture
def small_config():
    """64 subcarriers at 2.5 MHz: same 160 MHz bandwidth and gate pitch, fast to run."""
    return SensingConfig(num_subcarriers=64, subcarrier_spacing=2.5e6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frames(rng, frames, n):
    return rng.standard_normal((frames, n)) + 1j * rng.standard_normal((frames, n))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Collects one PASS/FAIL line per criterion for the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
