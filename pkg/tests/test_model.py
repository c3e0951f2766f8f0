import math

import numpy as np
import pytest

from keenmodel import (STANDARD_IC, ConfigError, DivergenceError, GenExpParams, ModelParams, State,
                       conserved_constant, derived, gen_exp, params_from_dict, params_to_dict,
                       profit_rate, reconstruct_wd, rhs)
from keenmodel.model import GrowthModel, unknown_keys

CST = 12.0


class TestGenExp:
    @pytest.mark.parametrize("g", [GenExpParams(1 / 25, 1 / 25, 2, 0), GenExpParams(96 / 100, 0, 2, -1 / 25),
                                   GenExpParams(3 / 100, 10, 100, 3), GenExpParams(3 / 100, 2, -50, 1 / 2)])
    def test_passes_through_reference_point(self, g):
        assert gen_exp(g.x_nu, g) == g.y_nu

    def test_standard_values(self, std):
        assert std.g_inv(1 / 25) == pytest.approx(1 / 25, abs=1e-15)
        assert std.g_ph(0.96) == 0.0
        assert std.g_tau_rl(0.03) == 10.0

    def test_wage_pressure_floor_at_zero_employment(self, std):
        assert std.g_ph(1e-12) == pytest.approx(-1 / 25, abs=1e-15)
        assert std.g_ph.limit(-1) == -1 / 25

    def test_clip_and_overflow(self, std):
        assert gen_exp(-1e4, std.g_inv) == 0.0
        with pytest.raises(DivergenceError):
            gen_exp(-1e4, std.g_tau_lc)

    def test_degenerate_shape_rejected(self):
        with pytest.raises(ConfigError):
            GenExpParams(0.0, 1.0, 1.0, 1.0)

    def test_nonfinite_argument(self, std):
        with pytest.raises(ValueError):
            gen_exp(math.nan, std.g_inv)

    def test_inverse_and_derivative(self, std, rng):
        for g in (std.g_inv, std.g_ph, std.g_tau_rl, std.g_tau_lc):
            x = g.x_nu + rng.uniform(-0.01, 0.01)
            assert g.inverse(g(x)) == pytest.approx(x, abs=1e-12)
            h = 1e-6
            assert g.derivative(x) == pytest.approx((g(x + h) - g(x - h)) / (2 * h), rel=1e-6)

    def test_inverse_out_of_range(self, std):
        with pytest.raises(ValueError):
            std.g_inv.inverse(-0.1)


class TestParams:
    def test_defaults(self, std):
        assert (std.alpha, std.beta, std.delta, std.omega) == (0.015, 0.02, 0.01, 0.1)
        assert (std.s, std.v, std.r_L, std.r_D, std.tau_B, std.tau_Pc) == (0.27, 3.0, 0.05, 0.01, 1.0, 1.0)
        assert std.tau_W == 1 / 26
        assert std.has_standard_shapes

    @pytest.mark.parametrize("bad", [{"s": 1.0}, {"s": 0.0}, {"v": -1.0}, {"tau_B": 0.0},
                                     {"r_L": 0.01}])
    def test_validation(self, bad):
        with pytest.raises(ConfigError):
            ModelParams(**bad)

    def test_algebraic_growth_rates(self):
        p = ModelParams(growth=GrowthModel("algebraic"))
        a0, b0 = p.growth_rates(0.0)
        assert a0 == pytest.approx(p.alpha) and b0 == pytest.approx(p.beta)
        ts = np.linspace(0, 200, 50)
        rates = np.array([p.growth_rates(t) for t in ts])
        assert np.all(rates > 0) and np.all(np.diff(rates, axis=0) < 0)
        h = 1e-5
        num = (math.log(p.productivity(10 + h)) - math.log(p.productivity(10 - h))) / (2 * h)
        assert num == pytest.approx(p.growth_rates(10)[0], rel=1e-8)

    def test_unknown_growth_variant(self):
        with pytest.raises(ConfigError):
            GrowthModel("logistic")

    def test_dict_round_trip(self, std):
        q = params_from_dict(params_to_dict(std.with_(s=0.3, v=2.9)))
        assert q == std.with_(s=0.3, v=2.9)

    def test_unknown_keys_listed(self):
        d = {"alpah": 1, "s": 0.3, "G": {"inv": {"slop": 2}, "foo": {}}, "growth": {"tO": 1}}
        assert sorted(unknown_keys(d)) == ["G.foo", "G.inv.slop", "alpah", "growth.tO"]
        with pytest.raises(ConfigError, match="alpah.*growth.tO"):
            params_from_dict(d)

    def test_nested_override(self, std):
        q = params_from_dict({"G": {"inv": {"slope": 3}}})
        assert q.g_inv.slope == 3.0 and q.g_inv.x_nu == std.g_inv.x_nu


class TestIdentities:
    def test_conserved_constant(self):
        assert conserved_constant(STANDARD_IC) == 12.0
        assert reconstruct_wd(STANDARD_IC, 12.0) == 13.0

    def test_reconstruct_trivial(self):
        assert reconstruct_wd(np.zeros(8), 0.0) == 0.0
        y = np.zeros(8)
        y[2] = 1.0
        assert reconstruct_wd(y, 1.0) == 0.0

    def test_profit_rate_standard(self, std):
        assert profit_rate(STANDARD_IC, 0.0, std) == pytest.approx(-43 / 9000, rel=1e-14)

    def test_profit_rate_without_wages(self, std):
        y = STANDARD_IC.as_array()
        y[4] = y[2] = y[3] = 0.0
        assert profit_rate(y, 0.0, std) == pytest.approx(1 / std.v)

    def test_profit_rate_zero(self, std):
        y = STANDARD_IC.as_array()
        y[2] = y[3] = 0.0
        y[4] = y[5] * std.productivity(0.0)
        assert profit_rate(y, 0.0, std) == pytest.approx(0.0, abs=1e-16)

    def test_profit_rate_zero_price(self, std):
        y = STANDARD_IC.as_array()
        y[5] = 0.0
        with pytest.raises(ZeroDivisionError):
            profit_rate(y, 0.0, std)


class TestRhs:
    def test_initial_capital_growth(self, std):
        d = derived(0.0, STANDARD_IC.as_array(), std, CST)
        assert d.inv == pytest.approx(0.04 * math.exp(2 * (-43 / 9000 - 0.04) / 0.04), rel=1e-14)
        assert d.g == pytest.approx(-0.0085790, abs=1e-6)
        assert d.Y_r == 300.0 and d.W_D == 13.0
        assert rhs(0.0, STANDARD_IC.as_array(), std, CST)[6] == pytest.approx(-7.722, abs=1e-3)

    def test_employment_stationary_at_natural_growth(self, std):
        y = STANDARD_IC.as_array()
        pi_star = std.g_inv.inverse(std.v * (std.alpha + std.beta + std.delta))
        Y = y[6] / std.v
        a = std.productivity(0.0)
        interest = std.r_L * y[2] - std.r_D * y[3]
        y[4] = a * (y[5] * Y - interest - pi_star * std.v * y[5] * Y) / Y
        assert profit_rate(y, 0.0, std) == pytest.approx(pi_star, abs=1e-14)
        assert rhs(0.0, y, std, CST)[7] == pytest.approx(0.0, abs=1e-15)

    def test_nine_state_consistent(self, std, rng):
        y8 = STANDARD_IC.as_array() * rng.uniform(0.9, 1.1, 8)
        y9 = np.append(y8, reconstruct_wd(y8, CST))
        f8, f9 = rhs(3.0, y8, std, CST), rhs(3.0, y9, std, CST)
        np.testing.assert_allclose(f9[:8], f8, rtol=1e-13, atol=1e-13)
        assert f9[8] == pytest.approx(f8[2] - f8[3] - f8[1], abs=1e-10)

    def test_saturated_lending(self, std):
        y = STANDARD_IC.as_array()
        y[4] = 1e6  # wages far above output push the profit rate deep negative
        with pytest.raises(DivergenceError):
            rhs(0.0, y, std, CST)
        f = rhs(0.0, y, std, CST, saturate=True)
        assert np.all(np.isfinite(f))

    def test_state_round_trip(self):
        assert State.from_array(STANDARD_IC.as_array()) == STANDARD_IC
