"""Closed-form and approximate excess-risk formulas.

For strongly convex diagonal problems the risk of K reshuffled epochs over N
points at step size eta splits into three per-eigenvalue sums (write
r_i = 1 - eta * lambda_i, T = K * N):

    bias            0.5 * sum_i theta0_i^2 lambda_i r_i^(2T)
    epoch variance  (sigma^2/N) * sum_i (1 - r_i^T)(r_i^N - r_i^T)/(1 + r_i^N)
    step variance   (eta sigma^2/2) * sum_i lambda_i (1 - r_i^(2T))/(2 - eta lambda_i)

The epoch-variance term is the noise reinjected by revisiting the same
examples across epochs; it vanishes at K = 1.  The step-variance term is the
usual constant-step SGD noise floor.  A two-term simplification M(K, N; eta)
keeps only the slowest bias mode and the noise floor's upper bound, and is
what the approximately optimal learning rate optimizes.

Zipf one-hot models admit an exact expected risk under the isotropic prior
on w_star, continuous in N, evaluated per state in log space.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import Problem, ZipfModel

Regime = Literal["small_k", "large_k"]

# Power bases are clamped here before taking logs.
_TINY = 1e-300


class StabilityWarning(UserWarning):
    """The suggested learning rate exceeds the conservative 1/D**2 bound."""


@dataclass(frozen=True)
class RiskBreakdown:
    """Approximate risk and its three components (all non-negative)."""

    bias: float
    epoch_variance: float
    step_variance: float
    total: float


def _powers(log_r: np.ndarray, exponent: float) -> np.ndarray:
    return np.exp(exponent * log_r)


def approx_risk(problem: Problem, epochs: int, dataset_size: int, eta: float) -> RiskBreakdown:
    """Three-term risk approximation for K reshuffled epochs over N points.

    Valid for 0 < eta < 1/lambda_1, where every r_i = 1 - eta * lambda_i
    lies in (0, 1); eta outside that range raises ValueError.  Powers are
    computed as exp(m * log r_i) with r_i clamped at 1e-300, so very long
    horizons underflow cleanly to zero.
    """
    if epochs < 1 or dataset_size < 1:
        raise ValueError("epochs and dataset_size must be >= 1")
    lam = problem.spectrum.values
    if not (0.0 < eta < 1.0 / problem.spectrum.lam_max):
        raise ValueError("approx_risk requires 0 < eta < 1/lambda_1")
    theta0 = problem.initial_offset()
    sigma_sq = problem.noise_std**2
    total_steps = epochs * dataset_size

    log_r = np.log(np.maximum(1.0 - eta * lam, _TINY))
    r_n = _powers(log_r, float(dataset_size))
    r_t = _powers(log_r, float(total_steps))
    r_2t = _powers(log_r, 2.0 * total_steps)

    bias = 0.5 * float(np.sum(theta0**2 * lam * r_2t))
    epoch_variance = sigma_sq / dataset_size * float(np.sum((1.0 - r_t) * (r_n - r_t) / (1.0 + r_n)))
    step_variance = 0.5 * eta * sigma_sq * float(np.sum(lam * (1.0 - r_2t) / (2.0 - eta * lam)))
    return RiskBreakdown(
        bias=bias,
        epoch_variance=epoch_variance,
        step_variance=step_variance,
        total=bias + epoch_variance + step_variance,
    )


def simplified_risk(
    problem: Problem, epochs: int, dataset_size: int, eta: float, regime: Regime
) -> float:
    """Two-term surrogate M(K, N; eta) for the risk at the optimum's scale.

    small_k: 0.5 * theta_tilde^2 * lambda_d * exp(-2 lambda_d eta K N)
             + eta * tr(H) * sigma^2 / 4.
    large_k adds the reshuffling floor sigma^2 d / (2 N).

    theta_tilde^2 is the initial offset's mass in the bottom eigenspace.
    """
    if epochs < 1 or dataset_size < 1:
        raise ValueError("epochs and dataset_size must be >= 1")
    if not (eta > 0.0 and math.isfinite(eta)):
        raise ValueError("eta must be finite and positive")
    if regime not in ("small_k", "large_k"):
        raise ValueError(f"unknown regime: {regime!r}")
    spectrum = problem.spectrum
    lam_min = spectrum.lam_min
    sigma_sq = problem.noise_std**2
    value = 0.5 * problem.bottom_offset_energy() * lam_min * math.exp(
        -2.0 * lam_min * eta * epochs * dataset_size
    ) + 0.25 * eta * spectrum.trace * sigma_sq
    if regime == "large_k":
        value += 0.5 * sigma_sq * spectrum.d / dataset_size
    return value


def optimal_lr(problem: Problem, epochs: int, dataset_size: int) -> float:
    """Approximately optimal step size log(rho K N) / (2 lambda_d K N).

    rho = 4 theta_tilde^2 lambda_d / (tr(H) sigma^2) balances the two terms
    of the small-K surrogate.  Requires sigma > 0 and rho K N > 1; emits
    StabilityWarning when the suggestion exceeds the conservative 1/D**2
    stability bound.
    """
    if epochs < 1 or dataset_size < 1:
        raise ValueError("epochs and dataset_size must be >= 1")
    if problem.noise_std <= 0.0:
        raise ValueError("optimal_lr requires sigma > 0")
    spectrum = problem.spectrum
    lam_min = spectrum.lam_min
    rho = 4.0 * problem.bottom_offset_energy() * lam_min / (spectrum.trace * problem.noise_std**2)
    total_steps = epochs * dataset_size
    if rho * total_steps <= 1.0:
        raise ValueError("optimal_lr requires rho * K * N > 1")
    eta = math.log(rho * total_steps) / (2.0 * lam_min * total_steps)
    if eta > 1.0 / problem.data_bound**2:
        warnings.warn(
            f"suggested eta {eta:.3g} exceeds the stability bound "
            f"1/D^2 = {1.0 / problem.data_bound**2:.3g}",
            StabilityWarning,
            stacklevel=2,
        )
    return eta


def zipf_risk(model: ZipfModel, epochs: int, dataset_size: float, eta: float) -> float:
    """Exact expected risk for a Zipf one-hot model, continuous in N.

    Under the isotropic prior on w_star, K reshuffled epochs over N examples
    give exactly

        0.5 * sum_i p_i scale_i (1 - p_i + p_i (1 - eta scale_i)^(2K))^N,

    since state i appears Binomial(N, p_i) times and each appearance
    contracts coordinate i by (1 - eta scale_i) once per epoch.  Valid for
    0 < eta < 2/scale_1; the N-th power is evaluated in log space so real
    N >= 0 is supported.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if dataset_size < 0.0:
        raise ValueError("dataset_size must be >= 0")
    if not (0.0 < eta < 2.0 / float(model.scales[0])):
        raise ValueError("zipf_risk requires 0 < eta < 2/scale_1")
    p = model.probabilities
    lam = model.scales
    # (1 - eta lam)^(2K) through |.| is exact: the exponent is even.
    contraction = np.exp(2.0 * epochs * np.log(np.maximum(np.abs(1.0 - eta * lam), _TINY)))
    if dataset_size == 0.0:
        return 0.5 * float(np.sum(p * lam))
    with np.errstate(divide="ignore"):
        log_base = np.log1p(-p * (1.0 - contraction))
    return 0.5 * float(np.sum(p * lam * np.exp(dataset_size * log_base)))


def zipf_risk_enumerated(model: ZipfModel, epochs: int, dataset_size: int, eta: float) -> float:
    """Exact risk by brute-force enumeration of all d^N datasets.

    Exponential-cost reference for zipf_risk on tiny instances: every index
    tuple is weighted by its sampling probability, and the per-dataset risk
    follows from the one-hot recursion theta_i -> (1 - eta scale_i) theta_i
    applied K times per occurrence of state i.
    """
    if model.d**dataset_size > 2_000_000:
        raise ValueError("enumeration oracle is limited to d^N <= 2e6")
    if not (0.0 < eta < 2.0 / float(model.scales[0])):
        raise ValueError("zipf_risk_enumerated requires 0 < eta < 2/scale_1")
    p = model.probabilities
    lam = model.scales
    per_epoch = (1.0 - eta * lam) ** 2
    total = 0.0
    for assignment in itertools.product(range(model.d), repeat=dataset_size):
        weight = 1.0
        counts = [0] * model.d
        for i in assignment:
            weight *= p[i]
            counts[i] += 1
        risk = 0.0
        for i in range(model.d):
            risk += 0.5 * p[i] * lam[i] * per_epoch[i] ** (epochs * counts[i])
        total += weight * risk
    return total


def muennighoff_effective_n(epochs: int, dataset_size: float, r_star: float = 15.39) -> float:
    """Data-constrained scaling baseline N' = (1 + R*(1 - e^(-(K-1)/R*))) N.

    R* is the fitted half-life of repeated-data value; the implied effective
    reuse N'/N depends only on K.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if dataset_size <= 0.0 or r_star <= 0.0:
        raise ValueError("dataset_size and r_star must be positive")
    return (1.0 + r_star * (1.0 - math.exp(-(epochs - 1) / r_star))) * dataset_size
