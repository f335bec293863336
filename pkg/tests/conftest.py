"""Shared fixtures and the acceptance summary hook.

The expensive Monte Carlo runs (1000-trial presets) are session fixtures so
the acceptance tests can share them; everything else is cheap to rebuild.
"""

import time
from collections import OrderedDict

import pytest

from chainbreak import (IntegratorConfig, ModelParams, build_linearization,
                        build_variance, boundary_curves, estimate_break_prob,
                        example_quadratic, extend)

ACCEPTANCE = OrderedDict()
FIXTURE_SECONDS = {}


def record_criterion(name: str, passed: bool, detail: str = "") -> bool:
    """Register one acceptance line for the terminal summary."""
    ACCEPTANCE[name] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        status = "PASS" if ok else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ext_potential():
    return extend(example_quadratic())


@pytest.fixture(scope="session")
def fast_params(ext_potential):
    return ModelParams(potential=ext_potential, sigma=0.01, epsilon=0.25)


@pytest.fixture(scope="session")
def slow_params(ext_potential):
    return ModelParams(potential=ext_potential, sigma=0.02, epsilon=5e-4)


@pytest.fixture(scope="session")
def lin_fast(fast_params):
    return build_linearization(fast_params)


@pytest.fixture(scope="session")
def lin_slow(slow_params):
    return build_linearization(slow_params)


@pytest.fixture(scope="session")
def curves_slow(slow_params):
    return boundary_curves(slow_params)


@pytest.fixture(scope="session")
def var_fast(lin_fast):
    return build_variance(lin_fast)


@pytest.fixture(scope="session")
def fast_run_1000(fast_params):
    """1000 physical-frame trials of the fast preset (shared by criteria)."""
    cfg = IntegratorConfig(frame="physical", crossing="bridge", seed=101)
    t0 = time.perf_counter()
    res = estimate_break_prob(fast_params, cfg, 1000, side="left")
    FIXTURE_SECONDS["fast_run_1000"] = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def slow_run_1000(slow_params):
    """1000 physical-frame trials of the slow preset (shared by criteria)."""
    cfg = IntegratorConfig(frame="physical", crossing="bridge", seed=202)
    t0 = time.perf_counter()
    res = estimate_break_prob(slow_params, cfg, 1000, side="left")
    FIXTURE_SECONDS["slow_run_1000"] = time.perf_counter() - t0
    return res
