from __future__ import annotations

import numpy as np
import pytest

from nidsbench import synthetic
from nidsbench.bench.hardware import capture_hardware

# the sandbox CPU reports only "Intel(R) Xeon(R) Processor", which the
# provenance check rejects as a family name
TEST_CPU = "Intel Xeon W-2195"


def pytest_configure(config):
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    details = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    if report.failed and call.excinfo is not None:
        lines = str(call.excinfo.value).strip().splitlines()
        details = (details + "; " if details else "") + (lines[0] if lines else call.excinfo.typename)
    item.config._criteria[marker.args[0]] = (marker.args[1], report.outcome, details)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        text, outcome, details = crit[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {verdict}: {text}" + (f" [{details}]" if details else ""))


@pytest.fixture(scope="session")
def hardware():
    return capture_hardware({"cpu_model_exact": TEST_CPU})


@pytest.fixture(scope="session")
def small_dataset():
    """Five classes, timestamps, a few hundred rows each."""
    return synthetic.generate({0: 600, 1: 300, 2: 250, 3: 200, 4: 150}, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
