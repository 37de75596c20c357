"""Multi-epoch SGD on fixed datasets, and Monte Carlo risk estimates.

A run makes K passes over one dataset of N examples, reshuffling before each
pass, with the constant-step update

    w <- w - eta * x (x . (w - w_star)) + eta * noise * x.

Everything is computed in offset coordinates theta = w - w_star, where the
update needs only the example, its label noise, and theta itself.  The final
excess risk is 0.5 * theta^T H theta with H the diagonal data covariance.

Bias-variance tracking co-evolves two companion processes on the same example
stream: the bias process starts at theta_0 and sees no noise, the variance
process starts at 0 and sees only noise.  Their sum reproduces theta path
for path, up to float rounding.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import _kernels
from .model import Problem, SgdRun
from .rng import STREAM_DATA, STREAM_NOISE, STREAM_PERM, STREAM_TRUTH, derive_seed, generator

DataSource = Literal["gaussian", "zipf"]

# ||w|| above this multiple of (1 + ||w_star||) counts as divergence.
_DIVERGENCE_FACTOR = 1e8


class SgdDivergenceError(RuntimeError):
    """Raised when a run's weight norm blows up or goes non-finite."""

    def __init__(self, step: int, seed: int | None = None):
        self.step = step
        self.seed = seed
        detail = f"SGD diverged at step {step}"
        if seed is not None:
            detail += f" (run seed {seed})"
        super().__init__(detail)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Endpoint of one SGD run.

    final_bias_weight is the weight vector the noise-free companion process
    reaches (same data and shuffles, zero noise); final_var_weight is the
    noise-driven offset of the zero-initialized variance process, so that
    final_weight = final_bias_weight + final_var_weight.
    """

    final_weight: np.ndarray
    final_risk: float
    steps_taken: int
    final_bias_weight: np.ndarray | None = None
    final_var_weight: np.ndarray | None = None


@dataclass(frozen=True)
class RiskEstimate:
    """Monte Carlo mean excess risk with its standard error."""

    mean: float
    std_error: float
    replicas: int


@dataclass(frozen=True, eq=False)
class RunData:
    """Materialized randomness of one run: dataset, label noise, visit order.

    For Gaussian data `x` holds the examples row-wise; for Zipf data `idx`
    holds the state index of each example and `mu` the per-state example
    norms sqrt(scales).  `order` concatenates the K within-epoch shuffles.
    """

    kind: DataSource
    xi: np.ndarray
    order: np.ndarray
    x: np.ndarray | None = None
    idx: np.ndarray | None = None
    mu: np.ndarray | None = None


def excess_risk(problem: Problem, w: np.ndarray) -> float:
    """0.5 * (w - w_star)^T H (w - w_star) for the problem's diagonal H."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (problem.d,):
        raise ValueError("weight dimension does not match the problem")
    theta = w - problem.ground_truth
    return 0.5 * float(np.dot(problem.spectrum.values, theta * theta))


def _risk_from_theta(spectrum_values: np.ndarray, theta: np.ndarray) -> float:
    return 0.5 * float(np.dot(spectrum_values, theta * theta))


def _resolve_source(problem: Problem, data_source: DataSource | None) -> DataSource:
    if data_source is None:
        return "zipf" if problem.zipf is not None else "gaussian"
    if data_source == "zipf" and problem.zipf is None:
        raise ValueError("zipf data source requires a problem built from a ZipfModel")
    return data_source


def _epoch_orders(epochs: int, dataset_size: int, seed: int) -> np.ndarray:
    order = np.empty(epochs * dataset_size, dtype=np.int64)
    for k in range(epochs):
        rng = generator(seed, STREAM_PERM, k)
        order[k * dataset_size : (k + 1) * dataset_size] = rng.permutation(dataset_size)
    return order


def draw_run_data(
    problem: Problem,
    epochs: int,
    dataset_size: int,
    seed: int,
    data_source: DataSource | None = None,
) -> RunData:
    """Draw the dataset, noise, and shuffles of a run from its seed.

    The dataset, the label noise, and each epoch's permutation come from
    disjoint sub-streams of `seed`, so any one of them can be reproduced
    independently of the others.
    """
    source = _resolve_source(problem, data_source)
    noise_rng = generator(seed, STREAM_NOISE)
    xi = (
        noise_rng.standard_normal(dataset_size) * problem.noise_std
        if problem.noise_std > 0.0
        else np.zeros(dataset_size)
    )
    order = _epoch_orders(epochs, dataset_size, seed)
    data_rng = generator(seed, STREAM_DATA)
    if source == "gaussian":
        x = data_rng.standard_normal((dataset_size, problem.d))
        scale = np.sqrt(problem.spectrum.values)
        if not np.all(scale == 1.0):
            x *= scale
        return RunData(kind="gaussian", xi=xi, order=order, x=x)
    model = problem.zipf
    idx = data_rng.choice(model.d, size=dataset_size, p=model.probabilities).astype(np.int64)
    return RunData(kind="zipf", xi=xi, order=order, idx=idx, mu=np.sqrt(model.scales))


def _divergence_limit_sq(problem: Problem, w_star: np.ndarray) -> float:
    w_star_norm = float(np.linalg.norm(w_star))
    # Trigger in theta coordinates without false positives: ||theta|| beyond
    # this bound certifies ||w|| > _DIVERGENCE_FACTOR * (1 + ||w_star||).
    limit = _DIVERGENCE_FACTOR * (1.0 + w_star_norm) + w_star_norm
    return limit * limit


def run_on_data(
    problem: Problem,
    eta: float,
    data: RunData,
    track_decomposition: bool = False,
    theta0: np.ndarray | None = None,
    w_star: np.ndarray | None = None,
    seed: int | None = None,
) -> Trajectory:
    """Advance one run over already-materialized randomness.

    `theta0` and `w_star` default to the problem's own initial offset and
    ground truth; Monte Carlo callers override them when the ground truth is
    redrawn per replica.  `seed` is only attached to divergence errors.
    """
    if w_star is None:
        w_star = problem.ground_truth
    theta = np.array(problem.init - w_star if theta0 is None else theta0, dtype=np.float64)
    limit_sq = _divergence_limit_sq(problem, w_star)
    spectrum = problem.spectrum.values

    if track_decomposition:
        theta_bias = theta.copy()
        theta_var = np.zeros_like(theta)
        if data.kind == "gaussian":
            bad = _kernels.dense_chain_tracked(
                data.x, data.xi, data.order, eta, theta, theta_bias, theta_var, limit_sq
            )
        else:
            bad = _kernels.onehot_chain_tracked(
                data.idx, data.mu, data.xi, data.order, eta, theta, theta_bias, theta_var, limit_sq
            )
        if bad >= 0:
            raise SgdDivergenceError(int(bad), seed)
        return Trajectory(
            final_weight=w_star + theta,
            final_risk=_risk_from_theta(spectrum, theta),
            steps_taken=int(data.order.size),
            final_bias_weight=w_star + theta_bias,
            final_var_weight=theta_var,
        )

    if data.kind == "gaussian":
        bad = _kernels.dense_chain(data.x, data.xi, data.order, eta, theta, limit_sq)
    else:
        bad = _kernels.onehot_chain(data.idx, data.mu, data.xi, data.order, eta, theta, limit_sq)
    if bad >= 0:
        raise SgdDivergenceError(int(bad), seed)
    return Trajectory(
        final_weight=w_star + theta,
        final_risk=_risk_from_theta(spectrum, theta),
        steps_taken=int(data.order.size),
    )


def run_sgd(
    problem: Problem,
    run: SgdRun,
    data_source: DataSource | None = None,
    track_decomposition: bool = False,
) -> Trajectory:
    """Run K reshuffled epochs over one dataset drawn from run.seed.

    The data source defaults to the problem's own kind (Zipf one-hot when the
    problem carries a Zipf model, Gaussian otherwise).  Any eta is accepted;
    divergence is reported as an error rather than prevented, and
    `run.check_stability(problem)` tells whether eta is inside the
    conservative 1/D**2 regime.
    """
    data = draw_run_data(problem, run.epochs, run.dataset_size, run.seed, data_source)
    return run_on_data(problem, run.eta, data, track_decomposition, seed=run.seed)


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("REUSE_LAB_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def mc_risk_over_etas(
    problem: Problem,
    epochs: int,
    dataset_size: int,
    etas: Sequence[float],
    replicas: int,
    base_seed: int,
    workers: int | None = None,
    strict: bool = False,
) -> list[RiskEstimate]:
    """Monte Carlo risk at several learning rates on shared replica streams.

    Replica r draws one dataset, one noise vector, and one shuffle sequence
    from the derived seed hash(base_seed, r), then replays them at every eta
    (common random numbers, which makes argmin-over-eta selection stable).
    For Zipf problems each replica also redraws the ground truth from the
    isotropic prior, matching the closed-form risk's averaging.

    By default a rate that diverges in any replica reports an infinite
    estimate rather than raising, so grid searches simply never select it;
    strict=True propagates the divergence with the replica seed attached.
    """
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    etas = [float(e) for e in etas]
    for eta in etas:
        if not (eta >= 0.0 and math.isfinite(eta)):
            raise ValueError("learning rates must be finite and >= 0")
    spectrum = problem.spectrum.values
    is_zipf = problem.zipf is not None
    risks = np.empty((replicas, len(etas)))

    def one_replica(r: int) -> None:
        seed = derive_seed(base_seed, r)
        data = draw_run_data(problem, epochs, dataset_size, seed)
        if is_zipf:
            w_star = generator(seed, STREAM_TRUTH).standard_normal(problem.d)
        else:
            w_star = problem.ground_truth
        theta0 = problem.init - w_star
        limit_sq = _divergence_limit_sq(problem, w_star)
        for col, eta in enumerate(etas):
            theta = theta0.copy()
            if data.kind == "gaussian":
                bad = _kernels.dense_chain(data.x, data.xi, data.order, eta, theta, limit_sq)
            else:
                bad = _kernels.onehot_chain(data.idx, data.mu, data.xi, data.order, eta, theta, limit_sq)
            if bad >= 0 and strict:
                raise SgdDivergenceError(int(bad), seed)
            risks[r, col] = math.inf if bad >= 0 else _risk_from_theta(spectrum, theta)

    pool_size = min(_worker_count(workers), replicas)
    if pool_size > 1:
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            for _ in pool.map(one_replica, range(replicas)):
                pass
    else:
        for r in range(replicas):
            one_replica(r)

    out = []
    for col in range(len(etas)):
        column = risks[:, col]
        if not np.all(np.isfinite(column)):
            out.append(RiskEstimate(mean=math.inf, std_error=math.inf, replicas=replicas))
            continue
        std_error = float(np.std(column, ddof=1) / math.sqrt(replicas))
        out.append(RiskEstimate(mean=float(np.mean(column)), std_error=std_error, replicas=replicas))
    return out


def monte_carlo_risk(
    problem: Problem,
    epochs: int,
    dataset_size: int,
    eta: float,
    replicas: int,
    base_seed: int,
    workers: int | None = None,
) -> RiskEstimate:
    """Mean excess risk over independent replicas of a K-epoch run.

    Replica r uses the derived seed hash(base_seed, r); the estimate is the
    sample mean with std_error = sample std / sqrt(replicas).  Divergence in
    any replica propagates with that replica's seed attached.
    """
    return mc_risk_over_etas(
        problem, epochs, dataset_size, [eta], replicas, base_seed, workers, strict=True
    )[0]
