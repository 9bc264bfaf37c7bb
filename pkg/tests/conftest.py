import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pvgen import _kernels

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, summary = marker.args
    failed = report.failed or report.skipped
    prev_status, _, prev_seconds = _criteria.get(number, ("PASS", summary, 0.0))
    status = "FAIL" if failed or prev_status == "FAIL" else "PASS"
    _criteria[number] = (status, summary, prev_seconds + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, summary, seconds = _criteria[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {summary} ({seconds:.1f}s)")
