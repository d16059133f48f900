import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dualaif._accel import BACKEND
from dualaif.scenario import config as C
from dualaif.scenario import runs as R

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, name): one of the numbered acceptance criteria")
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, name = mark.args
    results = item.config.stash[_ACCEPTANCE_KEY]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        results[number] = (name, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section(f"acceptance criteria (backend={BACKEND})")
    for number in sorted(results):
        name, verdict, detail = results[number]
        line = f"[{verdict}] {number:2d}. {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(record_property):
    """Attach a human-readable measurement to the acceptance summary line."""

    def _add(text):
        record_property("detail", text)

    return _add


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cfg():
    return C.load_config()


# full-day runs are shared across modules; each is deterministic for the default config

@pytest.fixture(scope="session")
def default_cfg():
    return C.load_config()


@pytest.fixture(scope="session")
def building_day(default_cfg):
    return R.run_building_day(default_cfg)


@pytest.fixture(scope="session")
def community_day(default_cfg):
    return R.run_community_day(default_cfg)


@pytest.fixture(scope="session")
def extreme_day(default_cfg):
    return R.run_community_day(C.extreme_pricing(default_cfg))


SWEEP_ALPHAS = (0.0, 0.5, 1.0, 1.5, 2.0)


@pytest.fixture(scope="session")
def sweep(default_cfg):
    return R.sweep_ambiguity(default_cfg, SWEEP_ALPHAS)
