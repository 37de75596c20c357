"""Effective reuse rates: how much fresh data K epochs over N points buy.

E(K, N) = N'/N, where N' is the smallest one-pass dataset size whose optimal
risk matches the optimal K-epoch risk on N points.  The closed-form path
optimizes the exact Zipf risk in eta and solves for N' by bisection in
log N'; the simulated path matches a Monte Carlo K-epoch risk against a
tabulated one-pass curve.

Learning-rate optima come from a coarse log-spaced grid scan refined by
golden section.  Unimodality in eta is not guaranteed, so the grid guards
the basin choice; a boundary minimum is reported as such, never clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from .closed_form import zipf_risk
from .model import Problem, ZipfModel
from .rng import derive_seed
from .sgd_sim import (
    RiskEstimate,
    _divergence_limit_sq,
    draw_run_data,
    mc_risk_over_etas,
)
from . import _kernels

Transform = Literal["x_power", "log_x_power"]
PlateauCase = Literal["strongly_convex", "power", "log_power"]

# Bracket width in log N' below which the bisection stops.
_BISECT_TOL = 1e-4
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimalRisk:
    """Minimum of a risk curve over eta, with the full evaluation trace."""

    eta_star: float
    risk_star: float
    search_trace: tuple[tuple[float, float], ...]
    at_boundary: bool


@dataclass(frozen=True)
class ReusePoint:
    """One effective-reuse measurement E(K, N) = n_prime / N.

    eta_star, risk_star and risk_std_error describe the K-epoch side of the
    match when the producing path computes them; e_interval brackets e_value
    under the Monte Carlo uncertainty of the simulated path.
    """

    epochs: int
    dataset_size: float
    n_prime: float
    e_value: float
    method: Literal["closed_form_zipf", "simulated_strongly_convex"]
    eta_star: float | None = None
    risk_star: float | None = None
    risk_std_error: float | None = None
    e_interval: tuple[float, float] | None = None


@dataclass(frozen=True)
class PowerFit:
    """Least-squares fit y = c1 * u^c2 in log space (u = x or log x)."""

    c1: float
    c2: float
    r_squared: float


@dataclass(frozen=True)
class McParams:
    """Monte Carlo controls for the simulated reuse path.

    Risks are minimized over the learning rates eta = c * log(T)/T with T
    the total step count, c running over c_grid.
    """

    replicas: int = 500
    base_seed: int = 0
    c_grid: tuple[float, ...] = tuple(float(c) for c in np.geomspace(0.25, 4.0, 8))
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.replicas < 2:
            raise ValueError("replicas must be >= 2")
        if len(self.c_grid) == 0 or any(c <= 0.0 for c in self.c_grid):
            raise ValueError("c_grid must be non-empty and positive")


def minimize_risk(
    risk_fn: Callable[[float], float],
    lo: float,
    hi: float,
    grid_points: int = 64,
    refine_iters: int = 48,
) -> OptimalRisk:
    """Minimize risk_fn over [lo, hi]: log-spaced scan, then golden section.

    The scan places grid_points log-spaced probes; golden section then
    refines inside the bracket around the best cell.  Non-finite values are
    treated as +inf (an all-non-finite grid is an error).  The reported
    minimum is the best point ever evaluated, so risk_star is a true upper
    bound on the curve minimum seen.
    """
    if not (0.0 < lo < hi and math.isfinite(hi)):
        raise ValueError("need 0 < lo < hi, both finite")
    if grid_points < 8:
        raise ValueError("grid_points must be >= 8")
    trace: list[tuple[float, float]] = []

    def probe(eta: float) -> float:
        value = float(risk_fn(eta))
        if not math.isfinite(value):
            value = math.inf
        trace.append((eta, value))
        return value

    grid = np.geomspace(lo, hi, grid_points)
    values = [probe(eta) for eta in grid]
    best = int(np.argmin(values))
    if not math.isfinite(values[best]):
        raise ValueError("risk_fn is non-finite on the whole grid")

    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, grid_points - 1)])
    if refine_iters > 0 and b > a:
        x1 = b - _GOLDEN * (b - a)
        x2 = a + _GOLDEN * (b - a)
        f1, f2 = probe(x1), probe(x2)
        for _ in range(max(refine_iters - 2, 0)):
            if f1 <= f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLDEN * (b - a)
                f1 = probe(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLDEN * (b - a)
                f2 = probe(x2)

    eta_star, risk_star = min(trace, key=lambda pair: pair[1])
    rel = 1e-12 * (1.0 + abs(hi))
    at_boundary = abs(eta_star - lo) <= rel or abs(eta_star - hi) <= rel
    return OptimalRisk(
        eta_star=eta_star,
        risk_star=risk_star,
        search_trace=tuple(trace),
        at_boundary=at_boundary,
    )


def risk_star_zipf(
    model: ZipfModel,
    epochs: int,
    dataset_size: float,
    eta_hi: float | None = None,
) -> OptimalRisk:
    """Optimal exact Zipf risk over eta in (0, eta_hi], eta_hi < 2/scale_1.

    The default upper end sits just inside the validity boundary 2/scale_1,
    where the optimal one-pass step size accumulates for power spectra.
    """
    lam1 = float(model.scales[0])
    if eta_hi is None:
        eta_hi = (2.0 - 1e-6) / lam1
    if not (0.0 < eta_hi < 2.0 / lam1):
        raise ValueError("eta_hi must lie in (0, 2/scale_1)")
    return minimize_risk(
        lambda eta: zipf_risk(model, epochs, dataset_size, eta),
        lo=eta_hi * 5e-7,
        hi=eta_hi,
        grid_points=96,
        refine_iters=60,
    )


def effective_reuse_zipf(
    model: ZipfModel,
    epochs: int,
    dataset_size: float,
    eta_hi: float | None = None,
) -> ReusePoint:
    """E(K, N) for a Zipf model from the exact risk formula.

    Solves min{ N' : optimal one-pass risk at N' <= optimal K-epoch risk at
    N } by bisection on log N', using that the one-pass optimum is strictly
    decreasing in N'.  The bracket grows geometrically and is capped near
    8 K N, far above the information-theoretic ceiling E <= K.
    """
    if dataset_size < 1.0:
        raise ValueError("dataset_size must be >= 1")
    target = risk_star_zipf(model, epochs, dataset_size, eta_hi)

    def one_pass(n: float) -> float:
        return risk_star_zipf(model, 1, n, eta_hi).risk_star

    lo = 0.5 * dataset_size
    while one_pass(lo) <= target.risk_star and lo > 1e-3:
        lo *= 0.5
    hi = 2.0 * dataset_size
    cap = max(8.0 * epochs * dataset_size, 16.0 * dataset_size)
    while one_pass(hi) > target.risk_star:
        hi *= 2.0
        if hi > cap:
            raise RuntimeError(
                "one-pass risk never reaches the K-epoch optimum below the bracket cap"
            )
    while math.log(hi / lo) > _BISECT_TOL:
        mid = math.sqrt(lo * hi)
        if one_pass(mid) <= target.risk_star:
            hi = mid
        else:
            lo = mid
    n_prime = math.sqrt(lo * hi)
    return ReusePoint(
        epochs=epochs,
        dataset_size=float(dataset_size),
        n_prime=n_prime,
        e_value=n_prime / dataset_size,
        method="closed_form_zipf",
        eta_star=target.eta_star,
        risk_star=target.risk_star,
    )


def tabulate_one_pass_curve(
    problem: Problem,
    t_grid: Sequence[int],
    mc: McParams,
) -> list[tuple[int, RiskEstimate]]:
    """Monte Carlo one-pass optimal risks on a grid of dataset sizes.

    For each T the risk is minimized over eta = c * log(T)/T, c in
    mc.c_grid.  Replica r draws a single example/noise stream of the
    largest size from hash(mc.base_seed, r) and every grid point consumes a
    prefix of it: fresh one-pass data makes shuffling and suffix
    independence statistically irrelevant, and the shared stream keeps the
    curve smooth in T (common random numbers).

    A rate that diverges at some T scores infinity there and loses that
    point's minimization; only a T where every rate diverges raises.
    """
    t_grid = [int(t) for t in t_grid]
    if len(t_grid) == 0 or sorted(set(t_grid)) != t_grid or t_grid[0] < 2:
        raise ValueError("t_grid must be strictly increasing integers >= 2")
    t_max = t_grid[-1]
    spectrum = problem.spectrum.values
    theta0 = problem.initial_offset()
    limit_sq = _divergence_limit_sq(problem, problem.ground_truth)
    etas = [[c * math.log(t) / t for c in mc.c_grid] for t in t_grid]
    orders = [np.arange(t, dtype=np.int64) for t in t_grid]
    risks = np.empty((mc.replicas, len(t_grid), len(mc.c_grid)))

    def one_replica(r: int) -> None:
        seed = derive_seed(mc.base_seed, r)
        data = draw_run_data(problem, 1, t_max, seed)
        for pt, t in enumerate(t_grid):
            order = orders[pt]
            for col, eta in enumerate(etas[pt]):
                theta = theta0.copy()
                if data.kind == "gaussian":
                    bad = _kernels.dense_chain(data.x, data.xi, order, eta, theta, limit_sq)
                else:
                    bad = _kernels.onehot_chain(data.idx, data.mu, data.xi, order, eta, theta, limit_sq)
                risks[r, pt, col] = (
                    math.inf if bad >= 0 else 0.5 * float(np.dot(spectrum, theta * theta))
                )

    for r in range(mc.replicas):
        one_replica(r)

    curve: list[tuple[int, RiskEstimate]] = []
    for pt, t in enumerate(t_grid):
        means = risks[:, pt, :].mean(axis=0)
        best = int(np.argmin(means))
        if not math.isfinite(means[best]):
            raise ValueError(f"every learning rate in the c-grid diverged at T={t}")
        column = risks[:, pt, best]
        std_error = float(np.std(column, ddof=1) / math.sqrt(mc.replicas))
        curve.append((t, RiskEstimate(mean=float(means[best]), std_error=std_error, replicas=mc.replicas)))
    return curve


def _pav_nonincreasing(y: np.ndarray) -> np.ndarray:
    """Least-squares projection onto non-increasing sequences (PAV)."""
    sums = []
    counts = []
    for value in -np.asarray(y, dtype=np.float64):
        total, count = value, 1
        while sums and sums[-1] / counts[-1] > total / count:
            total += sums.pop()
            count += counts.pop()
        sums.append(total)
        counts.append(count)
    out = np.empty(len(y))
    pos = 0
    for total, count in zip(sums, counts):
        out[pos : pos + count] = total / count
        pos += count
    return -out


class CurveRangeError(RuntimeError):
    """The target risk falls outside the tabulated one-pass curve."""


def _invert_curve(log_t: np.ndarray, log_risk: np.ndarray, y: float) -> float:
    """Smallest T with curve(y) <= target on the regularized knots.

    log_risk must be non-increasing.  Flat stretches resolve to their left
    edge, matching the min-N' definition of the effective reuse rate.
    """
    if y > log_risk[0]:
        raise CurveRangeError("target risk lies above the tabulated curve range")
    if y < log_risk[-1]:
        raise CurveRangeError("target risk lies below the tabulated curve range; extend the grid")
    # first knot at or below the target level
    j = int(np.argmax(log_risk <= y))
    if j == 0:
        return float(math.exp(log_t[0]))
    span = log_risk[j - 1] - log_risk[j]
    frac = 1.0 if span == 0.0 else (log_risk[j - 1] - y) / span
    return float(math.exp(log_t[j - 1] + frac * (log_t[j] - log_t[j - 1])))


def curve_floor(one_pass_curve: Sequence[tuple[int, RiskEstimate]]) -> float:
    """Lowest risk the regularized one-pass curve can match.

    Inversion compares targets against the monotone-regularized knots, and
    the regularization pools a noisy uptick at the last knot upward, so the
    deepest matchable target can sit above the smallest raw mean.  Coverage
    checks must use this floor, not the raw minimum.
    """
    points = sorted((int(t), est) for t, est in one_pass_curve)
    means = np.array([est.mean for _, est in points], dtype=np.float64)
    return float(math.exp(_pav_nonincreasing(np.log(means))[-1]))


def predict_extension_size(
    one_pass_curve: Sequence[tuple[int, RiskEstimate]], risk: float
) -> int:
    """Tabulation size at which the regularized curve should reach `risk`.

    Extrapolates the pooled tail log-linearly, from the last regularized
    value back to the nearest strictly higher one.  Raw knots can claim a
    reach the pooled tail does not have (a noisy uptick pools upward), and
    an extension loop extrapolating raw knots can stall below its target;
    the pooled values cannot.  A flat pooled curve falls back to a
    half-decade hop, and the 1.15 margin covers extrapolation error.
    """
    points = sorted((int(t), est) for t, est in one_pass_curve)
    log_means = _pav_nonincreasing(np.log(np.array([est.mean for _, est in points])))
    t_last = points[-1][0]
    y_last = float(log_means[-1])
    j = len(points) - 2
    while j >= 0 and log_means[j] <= y_last + 1e-12:
        j -= 1
    if j < 0:
        return int(math.ceil(t_last * 10**0.5))
    slope = (y_last - float(log_means[j])) / (math.log(t_last) - math.log(points[j][0]))
    if slope >= -1e-3:
        return int(math.ceil(t_last * 10**0.5))
    log_t = math.log(t_last) + (math.log(risk) - y_last) / slope
    return int(math.ceil(math.exp(log_t) * 1.15))


def target_risk_simulated(
    problem: Problem,
    epochs: int,
    dataset_size: int,
    mc: McParams,
) -> tuple[float, RiskEstimate]:
    """Optimal-step K-epoch Monte Carlo risk: (eta_star, estimate).

    Minimizes the estimated mean over the learning rates c * log(KN)/KN
    for c in mc.c_grid, with all rates sharing each replica's dataset,
    noise, and shuffles (common random numbers).  Replica seeds derive from
    (mc.base_seed, K, N), so the same parameters always reproduce the same
    estimate.
    """
    total_steps = epochs * dataset_size
    if total_steps < 2:
        raise ValueError("K * N must be >= 2 so that log(KN) > 0")
    etas = [c * math.log(total_steps) / total_steps for c in mc.c_grid]
    cell_seed = derive_seed(mc.base_seed, epochs, dataset_size)
    estimates = mc_risk_over_etas(
        problem, epochs, dataset_size, etas, mc.replicas, cell_seed, mc.workers
    )
    best = int(np.argmin([est.mean for est in estimates]))
    if not math.isfinite(estimates[best].mean):
        raise ValueError(f"every learning rate in the c-grid diverged at K={epochs}, N={dataset_size}")
    return etas[best], estimates[best]


def effective_reuse_simulated(
    problem: Problem,
    epochs: int,
    dataset_size: int,
    one_pass_curve: Sequence[tuple[int, RiskEstimate]],
    mc: McParams,
    target: tuple[float, RiskEstimate] | None = None,
) -> ReusePoint:
    """E(K, N) for a simulated problem against a tabulated one-pass curve.

    The K-epoch target risk is estimated at the per-point optimal learning
    rate via target_risk_simulated (or taken from `target` when the caller
    already computed it); the curve is monotone-regularized in log space
    and inverted by piecewise log-linear interpolation.  Monte Carlo
    uncertainty on both sides propagates to e_interval.  A one-pass target
    at a tabulated size is the corresponding curve point by definition, so
    it self-matches exactly.
    """
    points = sorted((int(t), est) for t, est in one_pass_curve)
    if len(points) < 2:
        raise ValueError("one_pass_curve needs at least two points")
    ts = np.array([t for t, _ in points], dtype=np.float64)
    means = np.array([est.mean for _, est in points])
    rel_ses = np.array([est.std_error / est.mean if est.mean > 0 else 0.0 for _, est in points])
    if np.any(means <= 0.0):
        raise ValueError("curve risks must be positive")
    log_t = np.log(ts)
    log_risk = _pav_nonincreasing(np.log(means))

    grid_index = {int(t): i for i, (t, _) in enumerate(points)}
    if epochs == 1 and int(dataset_size) in grid_index:
        j = grid_index[int(dataset_size)]
        n_prime = float(dataset_size)
        target_log = float(log_risk[j])
        target_rel_se = float(rel_ses[j])
        eta_star = None
        risk_star = float(math.exp(target_log))
        risk_se = float(points[j][1].std_error)
    else:
        eta_star, estimate = (
            target if target is not None else target_risk_simulated(problem, epochs, dataset_size, mc)
        )
        risk_star = estimate.mean
        risk_se = estimate.std_error
        target_log = math.log(estimate.mean)
        target_rel_se = estimate.std_error / estimate.mean
        n_prime = _invert_curve(log_t, log_risk, target_log)

    # local curve uncertainty at the matched point
    j = min(int(np.searchsorted(ts, n_prime)), len(points) - 1)
    nearby = rel_ses[max(0, j - 1) : j + 1]
    curve_rel_se = float(nearby.max()) if nearby.size else 0.0
    combined = math.log1p(target_rel_se + curve_rel_se)
    y_lo = min(target_log + combined, float(log_risk[0]))
    y_hi = max(target_log - combined, float(log_risk[-1]))
    n_lo = _invert_curve(log_t, log_risk, y_lo)
    n_hi = _invert_curve(log_t, log_risk, y_hi)

    return ReusePoint(
        epochs=epochs,
        dataset_size=float(dataset_size),
        n_prime=n_prime,
        e_value=n_prime / dataset_size,
        method="simulated_strongly_convex",
        eta_star=eta_star,
        risk_star=risk_star,
        risk_std_error=risk_se,
        e_interval=(n_lo / dataset_size, n_hi / dataset_size),
    )


def fit_power_law(points: Sequence[tuple[float, float]], transform: Transform) -> PowerFit:
    """Fit y = c1 * x^c2 ("x_power") or y = c1 * (log x)^c2 ("log_x_power").

    Ordinary least squares on log y against log x or log log x; r_squared
    is the usual coefficient of determination of that linear fit.  Needs at
    least three points with positive y and x > 0 (x > 1 for log_x_power).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(y <= 0.0):
        raise ValueError("y values must be positive")
    if transform == "x_power":
        if np.any(x <= 0.0):
            raise ValueError("x values must be positive")
        u = np.log(x)
    elif transform == "log_x_power":
        if np.any(x <= 1.0):
            raise ValueError("log_x_power requires x > 1")
        u = np.log(np.log(x))
    else:
        raise ValueError(f"unknown transform: {transform!r}")
    if np.ptp(u) == 0.0:
        raise ValueError("x values are degenerate after the transform")
    v = np.log(y)
    design = np.column_stack([u, np.ones_like(u)])
    (slope, intercept), *_ = np.linalg.lstsq(design, v, rcond=None)
    residuals = v - design @ np.array([slope, intercept])
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return PowerFit(c1=float(np.exp(intercept)), c2=float(slope), r_squared=r_squared)


def predicted_plateau(instance: Problem | ZipfModel, dataset_size: float, case: PlateauCase) -> float:
    """Theoretical large-K plateau of E(K, N) as a function of N.

    strongly_convex: (tr(H) / (4 lambda_d d)) * log N, with the constant.
    power:           N^(b/(a-b)), rate only.
    log_power:       (log N)^b, rate only.
    """
    if dataset_size <= 1.0:
        raise ValueError("dataset_size must exceed 1")
    if case == "strongly_convex":
        if not isinstance(instance, Problem):
            raise TypeError("strongly_convex plateau needs a Problem")
        spectrum = instance.spectrum
        return spectrum.trace / (4.0 * spectrum.lam_min * spectrum.d) * math.log(dataset_size)
    if not isinstance(instance, ZipfModel):
        raise TypeError("power-law plateaus need a ZipfModel")
    if case == "power":
        if instance.law != "power":
            raise ValueError("model law does not match the requested case")
        return dataset_size ** (instance.b / (instance.a - instance.b))
    if case == "log_power":
        if instance.law != "log_power":
            raise ValueError("model law does not match the requested case")
        return math.log(dataset_size) ** instance.b
    raise ValueError(f"unknown case: {case!r}")
