import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_configure(config):
    # one entry per acceptance criterion, filled in by tests/test_acceptance.py
    config.acceptance_results = {}


def pytest_terminal_summary(terminalreporter, config):
    results = config.acceptance_results
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda s: (int(s.split(".")[0]), s)):
        status, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}")
