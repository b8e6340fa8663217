import math

import numpy as np
import pytest
from scipy import integrate

from funcevt.exponent_measure import MeasureOracle
from funcevt.limit_theory import (
    DegenerateCovarianceError,
    LimitField,
    LimitParams,
    functional_x_grid,
    limit_functionals,
    limit_variances_gm0,
    second_order_bias,
    second_order_check,
    simulate_limit_field,
    true_functions,
)
from funcevt.path_model import DataError, make_grid


def brute_force_bias(g, rho, x):
    def inner(y):
        val, _ = integrate.quad(lambda u: u ** (rho - 1.0), 1.0, y)
        return val * y ** (g - 1.0)

    val, _ = integrate.quad(inner, 1.0, x, epsabs=1e-11, epsrel=1e-11, limit=200)
    return val


class TestSecondOrderBias:
    def test_known_values(self):
        assert second_order_bias(0.0, -1.0, math.e) == pytest.approx(1.0 / math.e, rel=1e-12)
        assert second_order_bias(0.0, 0.0, math.e) == pytest.approx(0.5, rel=1e-10)
        assert second_order_bias(-1.0, -math.inf, 10.0) == 0.0

    def test_unit_argument_is_zero(self):
        for g in (0.0, -0.5):
            for r in (0.0, -1.0):
                assert second_order_bias(g, r, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_against_brute_force_grid(self):
        for g in (0.0, -0.5, -1.0):
            for r in (0.0, -0.5, -1.0):
                for x in (0.5, 1.0, 2.0, 10.0):
                    want = brute_force_bias(g, r, x)
                    got = second_order_bias(g, r, x)
                    assert abs(got - want) < 1e-8, (g, r, x)

    def test_vectorised(self):
        x = np.array([0.5, 1.0, 4.0])
        out = second_order_bias(-0.5, -1.0, x)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(0.0, abs=1e-14)

    def test_positive_x_required(self):
        with pytest.raises(DataError):
            second_order_bias(0.0, -1.0, 0.0)


class TestLimitParams:
    def test_constant_builder(self):
        p = LimitParams.constant(4, gamma_plus=1.0)
        assert p.gamma_plus.shape == (4,)
        np.testing.assert_allclose(p.gamma, np.ones(4))

    def test_sign_constraints(self):
        with pytest.raises(DataError):
            LimitParams(np.array([-0.5]), np.array([0.0]), np.array([-1.0]))
        with pytest.raises(DataError):
            LimitParams(np.array([0.0]), np.array([0.5]), np.array([-1.0]))

    def test_parts_cannot_both_be_nonzero(self):
        with pytest.raises(DataError):
            LimitParams(np.array([1.0]), np.array([-1.0]), np.array([-1.0]))


class TestTrueFunctions:
    def test_moving_max_location(self):
        truth = true_functions("moving-max")
        assert truth.location(0.0, 2.0) == pytest.approx(1.0 / math.log(2.0), rel=1e-12)
        assert truth.scale(0.0, 2.0) == truth.location(0.0, 2.0)
        assert truth.bias_amplitude(0.0, 10.0) == pytest.approx(0.05)
        assert truth.remainder_target(4.0) == pytest.approx(0.75)
        assert truth.rho == -1.0

    def test_gbm_location_inverts_marginal(self):
        truth = true_functions("pareto-gbm")
        for t, v in ((0.5, 20.0), (1.0, 50.0)):
            u = truth.location(t, v)
            assert float(truth.marginal.tail(t, u)) == pytest.approx(1.0 / v, rel=1e-9)
            assert u < v

    def test_gbm_location_bracket_for_large_v(self):
        # the bracket is asymptotic; it holds from about v = 100 on
        truth = true_functions("pareto-gbm")
        for t, v in ((0.5, 100.0), (1.0, 200.0), (1.0, 1e4)):
            u = truth.location(t, v)
            assert v - v ** -1.5 <= u <= v

    def test_gbm_location_at_time_zero(self):
        truth = true_functions("pareto-gbm")
        assert truth.location(0.0, 7.0) == 7.0

    def test_gbm_targets(self):
        truth = true_functions("pareto-gbm")
        assert truth.remainder_target(3.0) == 0.0
        assert truth.rho == -math.inf
        assert truth.bias_amplitude(0.2, 100.0) == pytest.approx(1e-3)

    def test_v_must_exceed_one(self):
        truth = true_functions("moving-max")
        with pytest.raises(DataError):
            truth.location(0.0, 1.0)


class TestFunctionalGrid:
    def test_geometric_from_one(self):
        x = functional_x_grid(x_max=100.0, n=9)
        assert x[0] == pytest.approx(1.0)
        assert x[-1] == pytest.approx(100.0)
        np.testing.assert_allclose(np.diff(np.log(x)), np.log(x[1]), rtol=1e-9)

    def test_validation(self):
        with pytest.raises(DataError):
            functional_x_grid(x_max=0.5)
        with pytest.raises(DataError):
            functional_x_grid(n=4)


class TestSimulateLimitField:
    def test_deterministic_and_zero_mean(self):
        oracle = MeasureOracle.pareto_gbm()
        g = make_grid(points=[0.0, 1.0])
        x = np.array([1.0, 2.0])
        a = simulate_limit_field(oracle, g, x, draws=4000, seed=5)
        b = simulate_limit_field(oracle, g, x, draws=4000, seed=5)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.n_draws == 4000
        assert np.abs(a.values.mean(axis=0)).max() < 4.0 / math.sqrt(4000)

    def test_covariance_recovered(self):
        oracle = MeasureOracle.pareto_gbm()
        g = make_grid(points=[0.0, 0.5])
        x = np.array([1.0, 3.0])
        field = simulate_limit_field(oracle, g, x, draws=20_000, seed=6)
        flat = field.values.reshape(field.n_draws, -1)
        emp = np.cov(flat, rowvar=False)
        assert np.abs(emp - field.cov).max() < 0.06

    def test_indefinite_matrix_rejected(self):
        class BrokenOracle:
            def intersection_mass(self, t, x, s, y):
                return -5.0

        g = make_grid(points=[0.0, 1.0])
        with pytest.raises(DegenerateCovarianceError):
            simulate_limit_field(BrokenOracle(), g, np.array([1.0]), draws=10)


class TestLimitFunctionals:
    @staticmethod
    def field_from_values(x, values):
        g = make_grid(m=values.shape[1])
        return LimitField(g, x, np.eye(x.size), values, 0, 0)

    def test_zero_field_gives_zero(self):
        x = functional_x_grid(x_max=1e4, n=256)
        field = self.field_from_values(x, np.zeros((3, 1, x.size)))
        out = limit_functionals(field, LimitParams.constant(1))
        for arr in (out.moment1, out.moment2, out.index, out.location, out.scale):
            np.testing.assert_array_equal(arr, 0.0)

    @pytest.mark.parametrize("gp,gm", [(1.0, 0.0), (0.0, -0.5)])
    def test_inverse_level_field_annihilates_moments(self, gp, gm):
        # W = 1/x makes both moment functionals vanish for every index,
        # leaving location 1 and scale gamma
        x = functional_x_grid(x_max=1e4, n=512)
        vals = np.broadcast_to(1.0 / x, (2, 1, x.size)).copy()
        field = self.field_from_values(x, vals)
        params = LimitParams(np.array([gp]), np.array([gm]), np.array([-1.0]))
        out = limit_functionals(field, params)
        assert np.abs(out.moment1).max() < 1e-3
        assert np.abs(out.moment2).max() < 1e-3
        np.testing.assert_allclose(out.location, 1.0)
        np.testing.assert_allclose(out.scale, gp + gm, atol=2e-3)

    def test_linear_combinations_consistent(self):
        rng = np.random.default_rng(7)
        x = functional_x_grid(x_max=100.0, n=64)
        vals = rng.standard_normal((5, 1, x.size))
        field = self.field_from_values(x, vals)
        out = limit_functionals(field, LimitParams.constant(1, gamma_plus=1.0))
        # at gamma_minus = 0 the index and scale rows are fixed linear
        # combinations of the moment rows and the location row
        np.testing.assert_allclose(
            out.index, -out.moment1 + 0.5 * out.moment2, rtol=1e-12, atol=1e-12
        )
        np.testing.assert_allclose(
            out.scale,
            out.location + 3.0 * out.moment1 - 0.5 * out.moment2,
            rtol=1e-12,
            atol=1e-12,
        )

    def test_variances_match_closed_forms(self):
        oracle = MeasureOracle.pareto_gbm()
        g = make_grid(m=1)
        x = functional_x_grid(x_max=1e4, n=512)
        field = simulate_limit_field(oracle, g, x, draws=20_000, seed=8)
        out = limit_functionals(field, LimitParams.constant(1, gamma_plus=1.0))
        ref = limit_variances_gm0(1.0)
        assert np.var(out.moment1[:, 0]) == pytest.approx(ref.var_moment1, rel=0.1)
        assert np.var(out.moment2[:, 0]) == pytest.approx(ref.var_moment2, rel=0.1)
        cov = float(np.cov(out.moment1[:, 0], out.moment2[:, 0])[0, 1])
        assert cov == pytest.approx(ref.cov_moments, rel=0.15)
        assert np.var(out.index[:, 0]) == pytest.approx(ref.var_index, rel=0.1)
        assert np.var(out.location[:, 0]) == pytest.approx(ref.var_location, rel=0.1)
        assert np.var(out.scale[:, 0]) == pytest.approx(ref.var_scale, rel=0.1)

    def test_grid_must_start_at_one(self):
        x = np.array([2.0, 4.0, 8.0])
        field = self.field_from_values(x, np.zeros((2, 1, 3)))
        with pytest.raises(DataError):
            limit_functionals(field, LimitParams.constant(1))


class TestGm0Variances:
    def test_derived_properties(self):
        v = limit_variances_gm0(2.0)
        assert v.var_hill == pytest.approx(4.0)
        assert v.var_index == pytest.approx(5.0)
        assert v.var_scale == pytest.approx(6.0)
        assert v.var_moment2 == 20.0

    def test_negative_gamma_rejected(self):
        with pytest.raises(DataError):
            limit_variances_gm0(-0.5)


class TestSecondOrderCheck:
    def test_moving_max_deviation_shrinks(self):
        truth = true_functions("moving-max")
        r = second_order_check(
            truth,
            v_grid=np.array([1e2, 1e3, 1e4]),
            x_grid=functional_x_grid(x_max=100.0, n=33),
        )
        assert r.max_deviation[0] < 0.01
        assert r.max_deviation[2] < r.max_deviation[1] < r.max_deviation[0]
        assert r.bracket_ok is None

    def test_gbm_time_zero_exact(self):
        truth = true_functions("pareto-gbm")
        r = second_order_check(
            truth,
            v_grid=np.array([100.0]),
            x_grid=np.array([1.0, 2.0, 5.0]),
            times=np.array([0.0]),
        )
        # U is exact at t = 0, so only log-cancellation roundoff remains
        assert r.max_deviation[0] < 1e-10
        assert r.bracket_ok and r.log_bound_ok

    def test_schedule_amplitude_decays(self):
        truth = true_functions("moving-max")
        r = second_order_check(
            truth,
            v_grid=np.array([100.0]),
            x_grid=np.array([1.0, 2.0]),
            schedule=((500, 22), (2000, 44), (8000, 89)),
        )
        assert len(r.schedule) == 3
        assert r.amplitude_decays
        n, k, amp, dev = r.schedule[0]
        assert (n, k) == (500, 22)
        assert amp == pytest.approx(math.sqrt(22) * 22 / 1000.0, rel=1e-12)
        assert dev == 0.0
