import json
import math

import numpy as np
import pytest

from keenmodel import STANDARD_IC, IntegrationConfig, ModelParams, conserved_constant, integrate
from keenmodel.experiments import (McSummary, branch_switch, fit_complex_exponential,
                                   monte_carlo_ic, monte_carlo_params, quasi_linear_span,
                                   ratio_diagnostic, run_rng, separatrix_search)
from keenmodel.leading import classify

P285 = ModelParams(s=0.285)
CST = conserved_constant(STANDARD_IC)


class TestExponentialFit:
    def test_synthetic_oscillating(self):
        t = np.linspace(0, 60, 1201)
        y = 3.0 * np.exp(0.1 * t) * np.sin(0.05 * t + 0.3)
        fit = fit_complex_exponential(t, y, (5, 55), complex_mode=True, mu0=0.09 + 0.06j)
        assert fit.amplitude == pytest.approx(3.0, rel=1e-8)
        assert fit.phase == pytest.approx(0.3, abs=1e-8)
        assert fit.rate == pytest.approx(0.1 + 0.05j, abs=1e-8)
        np.testing.assert_allclose(fit(t), y, rtol=1e-7, atol=1e-9)

    def test_synthetic_fixed_rates(self):
        t = np.linspace(0, 60, 1201)
        y = 3.0 * np.exp(0.1 * t) * np.sin(0.05 * t + 0.3)
        fit = fit_complex_exponential(t, y, (5, 55), complex_mode=True, mu0=0.1 + 0.05j, fix_rates=True)
        assert (fit.amplitude, fit.phase) == pytest.approx((3.0, 0.3), abs=1e-8)

    def test_real_mode_stable_run(self, traj_300):
        fit = fit_complex_exponential(traj_300.times, traj_300["B_C"], (100, 150))
        assert fit.rate == pytest.approx(0.13171713, abs=1e-4)

    def test_canonical_run_amplitude(self, traj_285):
        mu0 = classify(P285).mu0
        fit = fit_complex_exponential(traj_285.times, traj_285["B_C"], (60, 90), True, mu0, fix_rates=True)
        assert fit.amplitude == pytest.approx(494.24171, rel=0.01)

    @pytest.mark.xfail(strict=True, reason="reference phase not reproduced within 1% from the standard run")
    def test_canonical_run_phase(self, traj_285):
        mu0 = classify(P285).mu0
        fit = fit_complex_exponential(traj_285.times, traj_285["B_C"], (60, 90), True, mu0, fix_rates=True)
        assert fit.phase == pytest.approx(-0.090296116, rel=0.01)

    def test_window_too_small(self):
        with pytest.raises(ValueError, match="fewer than"):
            fit_complex_exponential(np.arange(5.0), np.ones(5), (0, 4))

    def test_complex_mode_needs_seed(self):
        t = np.linspace(0, 1, 50)
        with pytest.raises(ValueError, match="seed"):
            fit_complex_exponential(t, np.ones(50), (0, 1), complex_mode=True)


@pytest.fixture(scope="module")
def ratio(traj_285):
    return ratio_diagnostic(traj_285, classify(P285).amplitudes)


class TestRatio:
    def test_lag(self, ratio):
        assert ratio.lag == pytest.approx(0.9054319 - 0.6862392, abs=1e-6)
        assert ratio.lag * 12 == pytest.approx(2.63, abs=0.01)

    def test_lagged_ratio_near_one(self, ratio):
        dev, raw = ratio.max_deviation((60, 115))
        assert dev < 5e-4
        assert raw > 5e-3


class TestMonteCarlo:
    def test_streams_are_independent_and_reproducible(self):
        a, b = run_rng(3, 0).standard_normal(4), run_rng(3, 1).standard_normal(4)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, run_rng(3, 0).standard_normal(4))

    def test_zero_spread_reproduces_reference(self, traj_285):
        mc = monte_carlo_ic(P285, sigma=0.0, n=3, seed=1)
        mu0 = classify(P285).mu0
        ref = fit_complex_exponential(traj_285.times, traj_285["B_C"], (60, 90), True, mu0, fix_rates=True)
        np.testing.assert_allclose(mc.values, ref.phase / mu0.imag, rtol=1e-9)
        assert mc.sd == pytest.approx(0.0, abs=1e-9)

    def test_shift_statistics(self, mc_ic):
        assert mc_ic.n_valid == 100
        assert mc_ic.mean == pytest.approx(-3.98, abs=0.4)
        assert mc_ic.sd == pytest.approx(1.12, abs=0.35)

    def test_unscaled_spread(self, mc_ic):
        b = mc_ic.extra["B_C_at_120"]
        assert np.nanmax(b) / np.nanmin(b) >= 100

    def test_parallel_matches_serial(self):
        a = monte_carlo_ic(P285, n=4, seed=5, jobs=1)
        b = monte_carlo_ic(P285, n=4, seed=5, jobs=2)
        np.testing.assert_array_equal(a.values, b.values)

    def test_requires_deferred_collapse(self):
        with pytest.raises(ValueError, match="deferred collapse"):
            monte_carlo_ic(ModelParams(s=0.3), n=2)

    def test_parameter_lags(self, std):
        mc = monte_carlo_params(std, sigma=0.10, n=200, seed=0)
        assert mc.n_valid > 50
        assert np.all(mc.valid > 0)
        assert 0.04 <= mc.min and mc.max <= 0.45
        assert mc.n_excluded == sum(o != "DeferredCollapse" for o in mc.outcomes)

    def test_empty(self, std):
        mc = monte_carlo_params(std, n=0)
        assert mc.n == 0 and mc.n_valid == 0 and math.isnan(mc.mean)
        assert json.loads(json.dumps(mc.summary_dict()))["mean"] is None

    def test_csv(self, tmp_path):
        mc = McSummary(n=2, seed=0, values=np.array([1.0, math.nan]), outcomes=["ok", "failed"],
                       extra={"amplitude": np.array([2.0, math.nan])})
        lines = mc.write_csv(tmp_path / "mc.csv").read_text().splitlines()
        assert lines[0] == "run,dt_shift,outcome,amplitude"
        assert lines[2] == "1,nan,failed,nan"


class TestBistability:
    BEFORE = ModelParams(v=2.9)
    AFTER = ModelParams(v=2.7263)

    def test_switch_at_zero_is_plain_run(self):
        o = branch_switch(self.BEFORE, self.AFTER, 0.0, horizon=60.0)
        plain = integrate(self.AFTER, STANDARD_IC, CST, IntegrationConfig(t_span=(0.0, 60.0)))
        np.testing.assert_array_equal(o.trajectory.states, plain.states)

    def test_growth_branch(self):
        o = branch_switch(self.BEFORE, self.AFTER, 70.0)
        assert o.outcome == "growth"
        assert o.late_rate == pytest.approx(0.1167, abs=1e-3)
        assert o.mu0_after == pytest.approx(0.1167, abs=1e-4)

    def test_collapse_branch(self):
        assert branch_switch(self.BEFORE, self.AFTER, 71.0).outcome == "collapse"

    @pytest.mark.xfail(strict=True, reason="reference switch times not reproduced")
    def test_reference_switch_times(self):
        assert branch_switch(self.BEFORE, self.AFTER, 94.16736).outcome == "growth"
        assert branch_switch(self.BEFORE, self.AFTER, 94.16748).outcome == "collapse"

    def test_separatrix_slope(self):
        res = separatrix_search(self.BEFORE, self.AFTER, (70.0, 70.6), width=1e-5)
        mu1 = sorted(z.real for z in classify(self.AFTER).all_roots if z.imag == 0 and z.real > 0)[0]
        assert res.outcomes == ("growth", "collapse")
        assert res.slope == pytest.approx(0.05428, abs=0.002)
        assert res.slope == pytest.approx(mu1, abs=1e-3)

    def test_degenerate_bracket(self):
        with pytest.raises(ValueError, match="degenerate"):
            separatrix_search(self.BEFORE, self.AFTER, (80.0, 80.0))

    def test_quasi_linear_span(self):
        t = np.linspace(0, 100, 2001)
        logy = np.where(t < 40, 0.2 * t, 8 + 0.05 * (t - 40))
        a, b, slope = quasi_linear_span(t, logy)
        assert a >= 40 and b == pytest.approx(99, abs=1.1)
        assert slope == pytest.approx(0.05, abs=1e-12)
