"""Optimization, curve inversion, and effective-reuse measurements."""

import math

import numpy as np
import pytest

from reuse_lab.model import make_explicit_zipf, make_gaussian_isotropic, make_zipf, zipf_problem
from reuse_lab.reuse import (
    CurveRangeError,
    McParams,
    _invert_curve,
    _pav_nonincreasing,
    curve_floor,
    effective_reuse_simulated,
    effective_reuse_zipf,
    fit_power_law,
    minimize_risk,
    predict_extension_size,
    predicted_plateau,
    risk_star_zipf,
    tabulate_one_pass_curve,
    target_risk_simulated,
)
from reuse_lab.sgd_sim import RiskEstimate


def small_mc(replicas=40, base_seed=0):
    return McParams(replicas=replicas, base_seed=base_seed, c_grid=(0.5, 1.0, 2.0))


class TestMinimizeRisk:
    def test_finds_interior_minimum(self):
        out = minimize_risk(lambda eta: (eta - 3.0) ** 2, 0.1, 10.0)
        assert out.eta_star == pytest.approx(3.0, abs=1e-6)
        assert out.risk_star == pytest.approx(0.0, abs=1e-12)
        assert not out.at_boundary

    def test_boundary_minimum_is_flagged(self):
        increasing = minimize_risk(lambda eta: eta, 0.1, 10.0)
        assert increasing.eta_star == 0.1
        assert increasing.at_boundary
        decreasing = minimize_risk(lambda eta: -eta, 0.1, 10.0)
        assert decreasing.eta_star == 10.0
        assert decreasing.at_boundary

    def test_tolerates_nonfinite_regions(self):
        def partial(eta):
            return float("inf") if eta < 1.0 else (eta - 2.0) ** 2

        out = minimize_risk(partial, 0.1, 10.0)
        assert out.eta_star == pytest.approx(2.0, abs=1e-6)

    def test_all_nonfinite_raises(self):
        with pytest.raises(ValueError):
            minimize_risk(lambda eta: float("nan"), 0.1, 10.0)

    def test_trace_and_reported_minimum_agree(self):
        out = minimize_risk(lambda eta: (eta - 0.5) ** 2 + 1.0, 0.01, 3.0, grid_points=16, refine_iters=20)
        assert len(out.search_trace) == 36
        assert out.risk_star == min(v for _, v in out.search_trace)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            minimize_risk(lambda eta: eta, 0.0, 1.0)
        with pytest.raises(ValueError):
            minimize_risk(lambda eta: eta, 1.0, 1.0)
        with pytest.raises(ValueError):
            minimize_risk(lambda eta: eta, 0.1, 1.0, grid_points=4)


class TestPav:
    def test_monotone_input_unchanged(self):
        y = np.array([5.0, 3.0, 3.0, 1.0])
        np.testing.assert_array_equal(_pav_nonincreasing(y), y)

    def test_known_violation(self):
        np.testing.assert_allclose(_pav_nonincreasing(np.array([3.0, 1.0, 2.0])), [3.0, 1.5, 1.5])

    def test_output_nonincreasing_and_mean_preserving(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            y = rng.standard_normal(30)
            out = _pav_nonincreasing(y)
            assert np.all(np.diff(out) <= 1e-12)
            assert out.mean() == pytest.approx(y.mean(), rel=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal(20)
        once = _pav_nonincreasing(y)
        np.testing.assert_allclose(_pav_nonincreasing(once), once, rtol=1e-14)


class TestInvertCurve:
    log_t = np.log(np.array([10.0, 100.0, 1000.0]))
    log_risk = np.log(np.array([1.0, 0.1, 0.01]))

    def test_exact_knot(self):
        assert _invert_curve(self.log_t, self.log_risk, math.log(0.1)) == pytest.approx(100.0)

    def test_log_linear_interpolation(self):
        # this curve is risk = 10/T, so risk = 0.05 should invert to T = 200
        t = _invert_curve(self.log_t, self.log_risk, math.log(0.05))
        assert t == pytest.approx(200.0, rel=1e-12)

    def test_flat_stretch_resolves_left(self):
        log_risk = np.log(np.array([1.0, 0.1, 0.1, 0.01]))
        log_t = np.log(np.array([10.0, 100.0, 300.0, 1000.0]))
        assert _invert_curve(log_t, log_risk, math.log(0.1)) == pytest.approx(100.0)

    def test_out_of_range(self):
        with pytest.raises(CurveRangeError):
            _invert_curve(self.log_t, self.log_risk, math.log(2.0))
        with pytest.raises(CurveRangeError):
            _invert_curve(self.log_t, self.log_risk, math.log(0.001))


def _estimate_curve(sizes, means):
    return [
        (int(t), RiskEstimate(mean=float(m), std_error=0.0, replicas=1))
        for t, m in zip(sizes, means)
    ]


class TestCurveFloor:
    def test_monotone_curve_floors_at_last_mean(self):
        curve = _estimate_curve([10, 100, 1000], [1.0, 0.1, 0.01])
        assert curve_floor(curve) == pytest.approx(0.01, rel=1e-14)

    def test_tail_uptick_pools_above_raw_minimum(self):
        # (0.5, 0.8) pools to their log-space mean sqrt(0.4) > 0.5
        curve = _estimate_curve([10, 100, 1000], [1.0, 0.5, 0.8])
        assert curve_floor(curve) == pytest.approx(math.sqrt(0.4), rel=1e-14)
        assert curve_floor(curve) > 0.5

    def test_floor_is_the_deepest_invertible_target(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            sizes = np.unique(rng.integers(10, 10_000, size=12))
            means = np.exp(-0.8 * np.log(sizes) + 0.3 * rng.standard_normal(sizes.size))
            floor = curve_floor(_estimate_curve(sizes, means))
            log_t = np.log(sizes.astype(np.float64))
            log_risk = _pav_nonincreasing(np.log(means))
            _invert_curve(log_t, log_risk, math.log(floor))
            with pytest.raises(CurveRangeError):
                _invert_curve(log_t, log_risk, math.log(floor) - 1e-9)


class TestPredictExtensionSize:
    def test_clean_power_tail_extrapolates_with_margin(self):
        # risk = 10/T, so risk 1e-3 sits at T = 1e4, plus the 1.15 margin
        curve = _estimate_curve([10, 100, 1000], [1.0, 0.1, 0.01])
        assert predict_extension_size(curve, 1e-3) == math.ceil(1e4 * 1.15)

    def test_pooled_uptick_predicts_past_the_tail(self):
        # raw minimum 0.010 claims to cover 0.0105, but the pooled tail is
        # sqrt(0.00012) ~ 0.01095; the prediction must still move forward
        curve = _estimate_curve([100, 1000, 1334], [0.10, 0.010, 0.012])
        assert predict_extension_size(curve, 0.0105) > 1334

    def test_deeper_targets_predict_larger_sizes(self):
        curve = _estimate_curve([100, 1000, 1334], [0.10, 0.010, 0.012])
        assert predict_extension_size(curve, 1e-4) > predict_extension_size(curve, 1e-3)

    def test_flat_curve_hops_half_a_decade(self):
        curve = _estimate_curve([10, 100, 1000], [1.0, 1.0, 1.0])
        assert predict_extension_size(curve, 0.5) == math.ceil(1000 * 10**0.5)


class TestFitPowerLaw:
    def test_exact_power_recovery(self):
        x = np.array([10.0, 100.0, 1000.0, 10000.0])
        fit = fit_power_law(list(zip(x, 2.0 * x**0.5)), "x_power")
        assert fit.c1 == pytest.approx(2.0, rel=1e-12)
        assert fit.c2 == pytest.approx(0.5, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_exact_log_power_recovery(self):
        x = np.array([10.0, 100.0, 1000.0, 10000.0])
        fit = fit_power_law(list(zip(x, 3.0 * np.log(x) ** 2.0)), "log_x_power")
        assert fit.c1 == pytest.approx(3.0, rel=1e-12)
        assert fit.c2 == pytest.approx(2.0, rel=1e-12)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(5)
        x = np.geomspace(10, 1e5, 12)
        y = 1.7 * x**0.3 * np.exp(rng.normal(0, 0.05, size=12))
        base = fit_power_law(list(zip(x, y)), "x_power")
        scaled = fit_power_law(list(zip(x, 10.0 * y)), "x_power")
        assert scaled.c2 == pytest.approx(base.c2, rel=1e-9)
        assert scaled.c1 == pytest.approx(10.0 * base.c1, rel=1e-9)
        assert scaled.r_squared == pytest.approx(base.r_squared, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_power_law([(1.0, 1.0), (2.0, 2.0)], "x_power")
        with pytest.raises(ValueError):
            fit_power_law([(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)], "x_power")
        with pytest.raises(ValueError):
            fit_power_law([(0.5, 1.0), (2.0, 2.0), (3.0, 3.0)], "log_x_power")
        with pytest.raises(ValueError):
            fit_power_law([(2.0, 1.0), (2.0, 2.0), (2.0, 3.0)], "x_power")
        with pytest.raises(ValueError):
            fit_power_law([(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], "cubic")


class TestPredictedPlateau:
    def test_strongly_convex_value(self):
        p = make_gaussian_isotropic(10, 0.1, 0)
        # all-ones spectrum: tr/(4 lambda_d d) = 1/4
        assert predicted_plateau(p, 100.0, "strongly_convex") == pytest.approx(
            0.25 * math.log(100.0)
        )

    def test_power_value(self):
        m = make_zipf("power", 4.5, 1.0, 10)
        assert predicted_plateau(m, 1000.0, "power") == pytest.approx(1000.0 ** (1.0 / 3.5))

    def test_log_power_value(self):
        m = make_zipf("log_power", 1.5, 2.0, 10)
        assert predicted_plateau(m, 1000.0, "log_power") == pytest.approx(math.log(1000.0) ** 2)

    def test_type_checks(self):
        p = make_gaussian_isotropic(4, 0.1, 0)
        m = make_zipf("power", 4.5, 1.0, 10)
        with pytest.raises(TypeError):
            predicted_plateau(m, 100.0, "strongly_convex")
        with pytest.raises(TypeError):
            predicted_plateau(p, 100.0, "power")
        with pytest.raises(ValueError):
            predicted_plateau(m, 100.0, "log_power")


class TestZipfReuse:
    model = make_zipf("power", 2.5, 0.5, 20)

    def test_one_pass_optimum_decreases(self):
        a = risk_star_zipf(self.model, 1, 50.0)
        b = risk_star_zipf(self.model, 1, 100.0)
        assert b.risk_star < a.risk_star
        assert not a.at_boundary

    def test_self_match_at_one_epoch(self):
        point = effective_reuse_zipf(self.model, 1, 60.0)
        assert point.e_value == pytest.approx(1.0, abs=1e-3)
        assert point.method == "closed_form_zipf"

    def test_monotone_in_epochs(self):
        values = [effective_reuse_zipf(self.model, k, 60.0).e_value for k in (1, 2, 4)]
        assert values[1] > values[0] - 1e-3
        assert values[2] > values[1] - 1e-3
        # reused data can never beat K independent copies
        for k, e in zip((1, 2, 4), values):
            assert e <= k * (1.0 + 1e-3)

    def test_reuse_point_fields(self):
        point = effective_reuse_zipf(self.model, 2, 40.0)
        assert point.epochs == 2
        assert point.dataset_size == 40.0
        assert point.n_prime == pytest.approx(40.0 * point.e_value, rel=1e-12)
        assert point.risk_star > 0.0
        assert point.eta_star > 0.0


class TestOnePassCurve:
    problem = make_gaussian_isotropic(3, 0.1, 2)

    def test_deterministic(self):
        a = tabulate_one_pass_curve(self.problem, [10, 20, 40], small_mc())
        b = tabulate_one_pass_curve(self.problem, [10, 20, 40], small_mc())
        assert a == b

    def test_roughly_decreasing(self):
        curve = tabulate_one_pass_curve(self.problem, [10, 100, 1000], small_mc(replicas=60))
        means = [est.mean for _, est in curve]
        assert means[-1] < means[0]

    def test_chunks_reproduce_single_tabulation(self):
        # counter-based replica streams mean a point's estimate cannot depend
        # on which chunk tabulated it; the lazy curve extension relies on this
        whole = tabulate_one_pass_curve(self.problem, [10, 20, 40, 80], small_mc())
        first = tabulate_one_pass_curve(self.problem, [10, 40], small_mc())
        second = tabulate_one_pass_curve(self.problem, [20, 80], small_mc())
        merged = dict(first + second)
        for t, est in whole:
            assert merged[t] == est

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            tabulate_one_pass_curve(self.problem, [], small_mc())
        with pytest.raises(ValueError):
            tabulate_one_pass_curve(self.problem, [20, 10], small_mc())
        with pytest.raises(ValueError):
            tabulate_one_pass_curve(self.problem, [1, 10], small_mc())

    def test_diverging_rates_lose_the_minimization(self):
        # c large enough to blow up at small T must not poison the curve as
        # long as some rate in the grid stays stable
        wide = McParams(replicas=20, base_seed=0, c_grid=(0.5, 1.0, 400.0))
        curve = tabulate_one_pass_curve(self.problem, [10, 1000], wide)
        assert all(math.isfinite(est.mean) for _, est in curve)
        hopeless = McParams(replicas=20, base_seed=0, c_grid=(400.0, 800.0))
        with pytest.raises(ValueError, match="diverged"):
            tabulate_one_pass_curve(self.problem, [10, 1000], hopeless)


class TestTargetRisk:
    problem = make_gaussian_isotropic(3, 0.1, 2)

    def test_deterministic_and_positive(self):
        eta_a, est_a = target_risk_simulated(self.problem, 2, 25, small_mc())
        eta_b, est_b = target_risk_simulated(self.problem, 2, 25, small_mc())
        assert (eta_a, est_a) == (eta_b, est_b)
        assert est_a.mean > 0.0
        assert eta_a in [c * math.log(50) / 50 for c in small_mc().c_grid]

    def test_all_rates_diverging_raises(self):
        hopeless = McParams(replicas=8, base_seed=0, c_grid=(400.0, 800.0))
        with pytest.raises(ValueError, match="diverged"):
            target_risk_simulated(self.problem, 2, 25, hopeless)

    def test_requires_two_steps(self):
        with pytest.raises(ValueError):
            target_risk_simulated(self.problem, 1, 1, small_mc())


def synthetic_curve(ts, level=10.0, rel_se=1e-6):
    # exact risk = level / T, which is linear in log-log, so inversion is exact
    return [
        (t, RiskEstimate(mean=level / t, std_error=rel_se * level / t, replicas=100))
        for t in ts
    ]


class TestEffectiveReuseSimulated:
    problem = make_gaussian_isotropic(3, 0.1, 2)

    def test_inverts_synthetic_curve_exactly(self):
        curve = synthetic_curve([10, 20, 40, 80, 160])
        target = (0.01, RiskEstimate(mean=10.0 / 37.5, std_error=1e-8, replicas=100))
        point = effective_reuse_simulated(self.problem, 3, 12, curve, small_mc(), target=target)
        assert point.n_prime == pytest.approx(37.5, rel=1e-9)
        assert point.e_value == pytest.approx(37.5 / 12.0, rel=1e-9)
        lo, hi = point.e_interval
        assert lo <= point.e_value <= hi

    def test_one_pass_on_grid_self_matches_exactly(self):
        curve = tabulate_one_pass_curve(self.problem, [10, 20, 40], small_mc())
        point = effective_reuse_simulated(self.problem, 1, 20, curve, small_mc())
        assert point.n_prime == 20.0
        assert point.e_value == 1.0
        assert point.eta_star is None
        assert point.risk_star > 0.0

    def test_target_below_curve_raises(self):
        curve = synthetic_curve([10, 20, 40])
        target = (0.01, RiskEstimate(mean=1e-6, std_error=1e-12, replicas=100))
        with pytest.raises(CurveRangeError):
            effective_reuse_simulated(self.problem, 4, 12, curve, small_mc(), target=target)

    def test_needs_two_knots(self):
        with pytest.raises(ValueError):
            effective_reuse_simulated(self.problem, 2, 12, synthetic_curve([10]), small_mc())

    def test_end_to_end_more_epochs_do_not_hurt(self):
        problem = make_gaussian_isotropic(4, 0.1, 9)
        mc = small_mc(replicas=120)
        curve = tabulate_one_pass_curve(problem, [12, 25, 50, 100, 200, 400, 800], mc)
        e1 = effective_reuse_simulated(problem, 1, 50, curve, mc)
        e4 = effective_reuse_simulated(problem, 4, 50, curve, mc)
        assert e1.e_value == 1.0
        assert e4.e_value > 1.0


class TestZipfMonteCarloBridge:
    def test_simulated_optimum_tracks_closed_form(self):
        # the simulated machinery and the exact formula must agree on a Zipf
        # instance: compare the closed-form optimal K-epoch risk with the
        # Monte Carlo estimate at the same learning rate
        model = make_explicit_zipf([0.55, 0.30, 0.15], [1.0, 0.7, 0.45])
        problem = zipf_problem(model, seed=3)
        closed = risk_star_zipf(model, 2, 12.0)
        from reuse_lab.sgd_sim import monte_carlo_risk

        est = monte_carlo_risk(problem, 2, 12, closed.eta_star, replicas=3000, base_seed=17)
        assert abs(est.mean - closed.risk_star) <= 4.0 * est.std_error
