"""Risk formulas against independently computed references.

The frozen literals in this module were produced by a standalone script
using plain python floats, so they are independent of the numpy evaluation
paths under test.  The Zipf formula is additionally checked against the
exhaustive enumeration oracle on randomized small instances.
"""

import math
import warnings

import numpy as np
import pytest

from reuse_lab.closed_form import (
    StabilityWarning,
    approx_risk,
    muennighoff_effective_n,
    optimal_lr,
    simplified_risk,
    zipf_risk,
    zipf_risk_enumerated,
)
from reuse_lab.model import Problem, Spectrum, make_explicit_zipf, make_gaussian_isotropic, make_zipf
from reuse_lab.sgd_sim import monte_carlo_risk


def reference_problem(w_last=0.5):
    return Problem(
        spectrum=Spectrum(np.array([1.0, 0.5, 0.25])),
        ground_truth=np.array([1.0, -2.0, w_last]),
        noise_std=0.7,
        init=np.zeros(3),
        data_bound=2.0,
    )


def random_explicit_model(rng, d):
    p = rng.uniform(0.1, 1.0, size=d)
    p /= p.sum()
    scales = np.sort(rng.uniform(0.2, 1.0, size=d))[::-1].copy()
    scales[0] = 1.0
    return make_explicit_zipf(p, scales)


class TestApproxRisk:
    # frozen reference values: d=3, lambda=(1, 0.5, 0.25), w*=(1, -2, 0.5),
    # sigma=0.7, K=2, N=4, eta=0.3
    def test_frozen_components(self):
        out = approx_risk(reference_problem(), 2, 4, 0.3)
        assert out.bias == pytest.approx(0.0848894541397767, rel=1e-12)
        assert out.epoch_variance == pytest.approx(0.03803100936310743, rel=1e-12)
        assert out.step_variance == pytest.approx(0.068284961833717, rel=1e-12)
        assert out.total == pytest.approx(0.19120542533660112, rel=1e-12)

    def test_epoch_variance_vanishes_at_one_pass(self):
        out = approx_risk(reference_problem(), 1, 4, 0.3)
        assert out.epoch_variance == 0.0

    def test_components_nonnegative(self):
        p = reference_problem()
        for eta in np.linspace(0.01, 0.99, 25):
            out = approx_risk(p, 3, 7, float(eta))
            assert out.bias >= 0.0
            assert out.epoch_variance >= 0.0
            assert out.step_variance >= 0.0

    def test_long_horizon_underflows_cleanly(self):
        out = approx_risk(reference_problem(), 1000, 100000, 0.5)
        assert out.bias == 0.0
        assert math.isfinite(out.total)

    def test_domain(self):
        p = reference_problem()
        with pytest.raises(ValueError):
            approx_risk(p, 1, 4, 0.0)
        with pytest.raises(ValueError):
            approx_risk(p, 1, 4, 1.0)  # 1/lambda_1
        with pytest.raises(ValueError):
            approx_risk(p, 0, 4, 0.3)

    def test_accuracy_against_exact_one_pass_recursion(self):
        # for H = I and Gaussian data, E[x x^T M x x^T] = (tr M) I + 2 M
        # makes the one-pass second moment exactly
        #   E||theta_{t+1}||^2 = A E||theta_t||^2 + eta^2 sigma^2 d,
        #   A = 1 - 2 eta + eta^2 (d + 2),
        # and a shuffled pass visits i.i.d. points once each, so the
        # simulator must track it.  The formula drops the 2M part, so at
        # eta'(1, 2000), right at the validity edge eta ~ (KN)^(-3/4), it
        # sits a stable several percent below truth.
        p = make_gaussian_isotropic(20, 0.1, seed=20240501)
        eta = optimal_lr(p, 1, 2000)
        contraction = 1.0 - 2.0 * eta + eta * eta * (p.d + 2)
        v = float(np.sum(p.initial_offset() ** 2))
        for _ in range(2000):
            v = contraction * v + eta * eta * p.noise_std**2 * p.d
        exact = 0.5 * v
        est = monte_carlo_risk(p, 1, 2000, eta, replicas=2000, base_seed=20240502)
        assert abs(est.mean - exact) <= 4.0 * est.std_error
        assert 0.90 <= approx_risk(p, 1, 2000, eta).total / exact <= 0.97


class TestSimplifiedRisk:
    def test_frozen_values(self):
        p = reference_problem()
        small = simplified_risk(p, 2, 4, 0.3, "small_k")
        large = simplified_risk(p, 2, 4, 0.3, "large_k")
        assert small == pytest.approx(0.07372481912225631, rel=1e-12)
        assert large == pytest.approx(0.2574748191222563, rel=1e-12)

    def test_regime_validation(self):
        with pytest.raises(ValueError):
            simplified_risk(reference_problem(), 2, 4, 0.3, "medium_k")
        with pytest.raises(ValueError):
            simplified_risk(reference_problem(), 2, 4, 0.0, "small_k")


class TestOptimalLr:
    def test_frozen_value(self):
        eta = optimal_lr(reference_problem(), 2, 4)
        assert eta == pytest.approx(0.21172032012549685, rel=1e-12)

    def test_closed_substitution_identity(self):
        # plugging eta' back into the small-K surrogate must give
        # sigma^2 tr(H) (lambda_d + log(rho K N)) / (8 lambda_d K N)
        p = reference_problem()
        for epochs, n in ((2, 4), (3, 50), (1, 1000)):
            eta = optimal_lr(p, epochs, n)
            value = simplified_risk(p, epochs, n, eta, "small_k")
            lam = p.spectrum.lam_min
            rho = 4.0 * p.bottom_offset_energy() * lam / (p.spectrum.trace * p.noise_std**2)
            t = epochs * n
            closed = (
                p.noise_std**2 * p.spectrum.trace / (8.0 * lam) * (lam + math.log(rho * t)) / t
            )
            assert value == pytest.approx(closed, rel=1e-12)

    def test_exactly_minimizes_surrogate_for_flat_spectrum(self):
        # with lambda_d = 1 the balance point is the true stationary point of
        # the surrogate, so every grid probe must be at least as large
        p = Problem(
            spectrum=Spectrum(np.ones(4)),
            ground_truth=np.array([1.0, -1.0, 0.5, 2.0]),
            noise_std=0.5,
            init=np.zeros(4),
            data_bound=3.0,
        )
        eta = optimal_lr(p, 2, 500)
        best = simplified_risk(p, 2, 500, eta, "small_k")
        for probe in np.geomspace(1e-5, 0.1, 400):
            assert best <= simplified_risk(p, 2, 500, float(probe), "small_k") * (1.0 + 1e-9)

    def test_near_optimal_at_long_horizons(self):
        # for lambda_d != 1 the balance point is optimal only to leading
        # order; at T = 1e6 it should be within 10% of the grid minimum
        p = reference_problem()
        epochs, n = 1, 1_000_000
        eta = optimal_lr(p, epochs, n)
        value = simplified_risk(p, epochs, n, eta, "small_k")
        grid = np.geomspace(eta / 100.0, min(eta * 100.0, 0.99), 2000)
        best = min(simplified_risk(p, epochs, n, float(g), "small_k") for g in grid)
        assert value <= 1.10 * best

    def test_requires_noise(self):
        p = Problem(
            spectrum=Spectrum(np.ones(2)),
            ground_truth=np.ones(2),
            noise_std=0.0,
            init=np.zeros(2),
            data_bound=2.0,
        )
        with pytest.raises(ValueError):
            optimal_lr(p, 2, 10)

    def test_requires_enough_steps(self):
        # rho = 0 when the initial offset has no bottom-eigenspace mass
        p = Problem(
            spectrum=Spectrum(np.array([1.0, 0.5])),
            ground_truth=np.array([1.0, 0.0]),
            noise_std=0.7,
            init=np.zeros(2),
            data_bound=2.0,
        )
        with pytest.raises(ValueError):
            optimal_lr(p, 2, 4)

    def test_stability_warning(self):
        hot = reference_problem(w_last=5.0)
        with pytest.warns(StabilityWarning):
            optimal_lr(hot, 2, 4)

    def test_no_warning_in_safe_regime(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            optimal_lr(reference_problem(), 2, 4)


class TestZipfRisk:
    def test_frozen_values(self):
        # d=2, p=(2/3, 1/3), scales=(1, 0.5), K=2, N=3, eta=0.5
        model = make_explicit_zipf([2.0 / 3.0, 1.0 / 3.0], [1.0, 0.5])
        assert zipf_risk(model, 2, 3, 0.5) == pytest.approx(0.05593994241437796, rel=1e-13)
        assert zipf_risk_enumerated(model, 2, 3, 0.5) == pytest.approx(
            0.05593994241437794, rel=1e-13
        )

    def test_matches_enumeration_on_random_models(self):
        rng = np.random.default_rng(123)
        for d in (1, 2, 3):
            for _ in range(3):
                model = random_explicit_model(rng, d)
                for epochs in (1, 2, 3):
                    for n in (1, 2, 3, 4):
                        for eta in (0.1, 0.5, 1.0, 1.8):
                            closed = zipf_risk(model, epochs, n, eta)
                            enum = zipf_risk_enumerated(model, epochs, n, eta)
                            assert abs(closed - enum) <= 1e-12

    def test_continuous_dataset_size(self):
        model = make_zipf("power", 2.5, 0.5, 6)
        low = zipf_risk(model, 2, 10.0, 0.4)
        mid = zipf_risk(model, 2, 10.5, 0.4)
        high = zipf_risk(model, 2, 11.0, 0.4)
        assert high < mid < low

    def test_empty_dataset_gives_prior_risk(self):
        model = make_explicit_zipf([0.5, 0.5], [1.0, 0.5])
        assert zipf_risk(model, 3, 0.0, 0.5) == pytest.approx(
            0.5 * float(np.sum(model.probabilities * model.scales)), rel=1e-15
        )

    def test_monotone_in_epochs_and_size(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            model = random_explicit_model(rng, 3)
            eta = float(rng.uniform(0.05, 1.9))
            risks_k = [zipf_risk(model, k, 20, eta) for k in (1, 2, 4, 8)]
            assert all(b <= a + 1e-15 for a, b in zip(risks_k, risks_k[1:]))
            risks_n = [zipf_risk(model, 2, n, eta) for n in (5, 10, 20, 40)]
            assert all(b <= a + 1e-15 for a, b in zip(risks_n, risks_n[1:]))

    def test_domain(self):
        model = make_explicit_zipf([0.5, 0.5], [1.0, 0.5])
        with pytest.raises(ValueError):
            zipf_risk(model, 1, 3, 0.0)
        with pytest.raises(ValueError):
            zipf_risk(model, 1, 3, 2.0)
        with pytest.raises(ValueError):
            zipf_risk(model, 0, 3, 0.5)
        with pytest.raises(ValueError):
            zipf_risk(model, 1, -1.0, 0.5)

    def test_enumeration_guard(self):
        model = make_explicit_zipf([0.5, 0.5], [1.0, 0.5])
        with pytest.raises(ValueError):
            zipf_risk_enumerated(model, 1, 21, 0.5)


class TestBaseline:
    def test_frozen_ratio(self):
        assert muennighoff_effective_n(2, 1.0) == pytest.approx(1.968203761280157, rel=1e-13)
        assert muennighoff_effective_n(2, 50.0) == pytest.approx(98.41018806400785, rel=1e-13)

    def test_single_pass_is_identity(self):
        assert muennighoff_effective_n(1, 123.0) == 123.0

    def test_monotone_and_saturating(self):
        values = [muennighoff_effective_n(k, 1.0) for k in (1, 2, 4, 16, 64)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert muennighoff_effective_n(100000, 1.0) == pytest.approx(16.39, rel=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            muennighoff_effective_n(0, 10.0)
        with pytest.raises(ValueError):
            muennighoff_effective_n(2, 0.0)
        with pytest.raises(ValueError):
            muennighoff_effective_n(2, 10.0, r_star=0.0)
