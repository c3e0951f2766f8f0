"""Shared fixtures: standard parameters and the long reference runs."""

import numpy as np
import pytest

from keenmodel import STANDARD_IC, IntegrationConfig, ModelParams, conserved_constant, integrate

CST = conserved_constant(STANDARD_IC)

# acceptance verdicts, filled in by test_acceptance and printed at the end
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def std():
    return ModelParams()


@pytest.fixture(scope="session")
def traj_285():
    """Canonical deferred-collapse run."""
    return integrate(ModelParams(s=0.285), STANDARD_IC, CST, IntegrationConfig())


@pytest.fixture(scope="session")
def traj_300():
    """Stable-growth run."""
    return integrate(ModelParams(s=0.3), STANDARD_IC, CST, IntegrationConfig())


@pytest.fixture(scope="session")
def traj_285_long():
    """Collapse run continued with lending saturated, long enough for the constants to settle."""
    cfg = IntegrationConfig(t_span=(0.0, 300.0), saturate_lending=True, sample_dt=0.25)
    return integrate(ModelParams(s=0.285), STANDARD_IC, CST, cfg)


@pytest.fixture(scope="session")
def mc_ic():
    """Initial-condition Monte Carlo around the canonical deferred-collapse model."""
    from keenmodel.experiments import monte_carlo_ic
    return monte_carlo_ic(ModelParams(s=0.285), sigma=0.01, n=100, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    n_ok = sum(ok for ok, _ in CRITERIA.values())
    terminalreporter.write_line(f"{n_ok}/{len(CRITERIA)} criteria pass")
