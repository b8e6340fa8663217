import math

import numpy as np
import pytest

from funcevt.estimators import (
    DegenerateTailError,
    EstimatorCurves,
    estimate_curves,
    hill_estimate,
    location_estimate,
    log_excess_moment,
    moment_estimate,
    negative_index_estimate,
    scale_estimate,
)
from funcevt.path_model import DataError, PathSample, make_grid
from funcevt.process_sim import KernelSpec, SimConfig, simulate_moving_max, simulate_pareto_gbm
from funcevt.limit_theory import true_functions


def column(values):
    return np.asarray(values, dtype=float)[:, None]


E = math.e
HAND = column([1.0, E, E**2, E**3])


class TestHandExample:
    # top 3 of {1, e, e^2, e^3} with k=2: log-excesses over e are {1, 2}

    def test_first_moment(self):
        assert log_excess_moment(HAND, 0, 2, 1) == pytest.approx(1.5, rel=1e-12)

    def test_second_moment(self):
        assert log_excess_moment(HAND, 0, 2, 2) == pytest.approx(2.5, rel=1e-12)

    def test_hill(self):
        assert hill_estimate(HAND, 0, 2) == pytest.approx(1.5, rel=1e-12)

    def test_negative_part(self):
        # 1 - 0.5/(1 - 2.25/2.5) = 1 - 5 = -4
        assert negative_index_estimate(HAND, 0, 2) == pytest.approx(-4.0, rel=1e-12)

    def test_moment_estimator(self):
        assert moment_estimate(HAND, 0, 2) == pytest.approx(-2.5, rel=1e-12)

    def test_location(self):
        assert location_estimate(HAND, 0, 2) == pytest.approx(E, rel=1e-12)

    def test_scale(self):
        # e * 1.5 * (1 + 4) = 7.5 e
        assert scale_estimate(HAND, 0, 2) == pytest.approx(7.5 * E, rel=1e-12)


class TestEdgeCases:
    def test_tied_top_values_give_zero_hill(self):
        vals = column([1.0, 5.0, 5.0, 5.0])
        assert hill_estimate(vals, 0, 2) == 0.0

    def test_tied_top_values_degenerate_for_moment(self):
        vals = column([1.0, 5.0, 5.0, 5.0])
        with pytest.raises(DegenerateTailError):
            negative_index_estimate(vals, 0, 2)

    def test_k_equal_one_degenerate(self):
        # with k = 1 the moment ratio is identically 1
        vals = column([1.0, 2.0, 3.0])
        with pytest.raises(DegenerateTailError):
            moment_estimate(vals, 0, 1)

    def test_k_out_of_range(self):
        vals = column([1.0, 2.0, 3.0])
        with pytest.raises(DataError):
            hill_estimate(vals, 0, 3)
        with pytest.raises(DataError):
            hill_estimate(vals, 0, 0)

    def test_negative_values_rejected(self):
        with pytest.raises(DataError):
            hill_estimate(column([1.0, -2.0, 3.0]), 0, 1)

    def test_scale_zero_when_hill_zero(self):
        vals = column([1.0, 5.0, 5.0, 5.0])
        assert scale_estimate(vals, 0, 2) == 0.0

    def test_hill_scale_invariance(self):
        rng = np.random.default_rng(0)
        vals = column(rng.pareto(2.0, 100) + 1.0)
        a = hill_estimate(vals, 0, 20)
        b = hill_estimate(7.0 * vals, 0, 20)
        assert a == pytest.approx(b, rel=1e-12)

    def test_moment_scale_invariance(self):
        rng = np.random.default_rng(1)
        vals = column(rng.pareto(2.0, 100) + 1.0)
        a = moment_estimate(vals, 0, 20)
        b = moment_estimate(0.01 * vals, 0, 20)
        assert a == pytest.approx(b, rel=1e-12)

    def test_only_top_k_plus_one_matter(self):
        rng = np.random.default_rng(2)
        vals = rng.pareto(1.0, 200) + 1.0
        lo = np.sort(vals)[: 200 - 21]
        changed = np.concatenate([lo * 0.5, np.sort(vals)[200 - 21 :]])
        assert hill_estimate(column(vals), 0, 20) == pytest.approx(
            hill_estimate(column(changed), 0, 20), rel=1e-12
        )
        assert moment_estimate(column(vals), 0, 20) == pytest.approx(
            moment_estimate(column(changed), 0, 20), rel=1e-12
        )

    def test_rank_based_small_sample(self):
        # top 3 of {0.7, 1.4, 2.8, 5.6} with k=2: excesses over 1.4 are
        # {log 2, log 4}, so the Hill value is 1.5 log 2
        vals = column([0.7, 1.4, 2.8, 5.6])
        assert hill_estimate(vals, 0, 2) == pytest.approx(1.5 * math.log(2.0), rel=1e-12)
        assert location_estimate(vals, 0, 2) == pytest.approx(1.4, rel=1e-12)


class TestConsistencyOnSyntheticLaws:
    def test_hill_on_pure_pareto(self):
        # gamma_plus = 1/alpha for a Pareto(alpha) tail; average over
        # replications to beat the k**-1/2 noise
        rng = np.random.default_rng(3)
        ests = []
        for _ in range(200):
            vals = 1.0 / (1.0 - rng.random(2000))
            ests.append(hill_estimate(column(vals), 0, 100))
        assert np.mean(ests) == pytest.approx(1.0, abs=0.05)

    def test_negative_part_on_pareto(self):
        # Pareto has gamma_minus = 0
        rng = np.random.default_rng(4)
        vals = 1.0 / (1.0 - rng.random(100_000)) ** 0.5
        est = negative_index_estimate(column(vals), 0, 500)
        assert abs(est) < 0.15

    def test_moment_estimator_bounded_support(self):
        # uniform on (0, 1] has gamma = -1
        rng = np.random.default_rng(5)
        vals = rng.random(100_000)
        est = moment_estimate(column(vals), 0, 500)
        assert est == pytest.approx(-1.0, abs=0.2)


class TestEstimateCurves:
    def test_matches_scalar_estimators(self):
        rng = np.random.default_rng(6)
        g = make_grid(m=3)
        sample = PathSample(g, rng.pareto(1.5, (400, 3)) + 1.0)
        curves = estimate_curves(sample, 40)
        for j in range(3):
            assert curves.gamma_plus[j] == hill_estimate(sample.values, j, 40)
            assert curves.gamma_minus[j] == negative_index_estimate(sample.values, j, 40)
            assert curves.gamma[j] == moment_estimate(sample.values, j, 40)
            assert curves.u_hat[j] == location_estimate(sample.values, j, 40)
            assert curves.a_hat[j] == scale_estimate(sample.values, j, 40)
        assert not curves.flag.any()

    def test_degenerate_column_flagged_not_fatal(self):
        g = make_grid(m=2)
        vals = np.column_stack([np.arange(1.0, 7.0), np.full(6, 3.0)])
        curves = estimate_curves(PathSample(g, vals), 2)
        assert curves.flag.tolist() == [0, 1]
        assert math.isnan(curves.gamma[1])
        assert not math.isnan(curves.gamma[0])

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        g = make_grid(m=4)
        sample = PathSample(g, rng.pareto(1.0, (300, 4)) + 1.0)
        curves = estimate_curves(sample, 30)
        f = tmp_path / "curves.csv"
        curves.to_csv(f)
        back = EstimatorCurves.from_csv(f, k=30, n=300)
        np.testing.assert_array_equal(back.gamma, curves.gamma)
        np.testing.assert_array_equal(back.a_hat, curves.a_hat)
        np.testing.assert_array_equal(back.flag, curves.flag)
        assert back.k == 30 and back.n == 300


class TestOnSimulatedFamilies:
    def test_moving_max_index_curve_near_one(self):
        g = make_grid(m=51)
        n, k = 8000, 200
        sample = simulate_moving_max(
            KernelSpec(), g, SimConfig(n=n, seed=13, value_floor=(n / k) / 4.0)
        )
        curves = estimate_curves(sample, k)
        assert not curves.flag.any()
        assert np.max(np.abs(curves.gamma - 1.0)) < 0.5
        assert np.max(np.abs(curves.gamma_plus - 1.0)) < 0.4

    def test_gbm_scale_curve_tracks_truth(self):
        g = make_grid(m=21)
        n, k = 8000, 200
        sample = simulate_pareto_gbm(g, SimConfig(n=n, seed=14))
        curves = estimate_curves(sample, k)
        truth = true_functions("pareto-gbm")
        a = np.array([truth.scale(t, n / k) for t in g.points])
        assert not curves.flag.any()
        assert np.max(np.abs(curves.a_hat / a - 1.0)) < 0.5
