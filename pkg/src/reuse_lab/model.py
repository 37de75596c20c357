"""Problem instances for linear regression with reused data.

Two families are covered: strongly convex Gaussian problems, where the data
covariance H = diag(lambda_1 >= ... >= lambda_d > 0) has a strictly positive
bottom eigenvalue, and Zipf one-hot models, where example i is the scaled
basis vector sqrt(scale_i) * e_i drawn with probability p_i.  Both reduce to
a diagonal `Problem` that the simulation and closed-form layers consume.

All spectra live in the eigenbasis of H, eigenvalues listed in non-increasing
order.  Learning-rate stability is measured against the data-norm bound D
(every example satisfies ||x|| <= D), so eta <= 1/D**2 is the safe regime for
the strongly convex analysis while Zipf models tolerate eta < 2/scale_1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .rng import STREAM_TRUTH, generator

ZipfLaw = Literal["power", "log_power", "explicit"]

# Relative slack when deciding membership in the bottom eigenspace.
_BOTTOM_RTOL = 1e-9
# Probabilities must sum to one within this tolerance.
_PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues of the data covariance, non-increasing and positive."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("spectrum must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("eigenvalues must be finite and positive")
        if np.any(np.diff(values) > 0.0):
            raise ValueError("eigenvalues must be non-increasing")

    @property
    def d(self) -> int:
        return self.values.size

    @property
    def trace(self) -> float:
        return float(self.values.sum())

    @property
    def lam_max(self) -> float:
        return float(self.values[0])

    @property
    def lam_min(self) -> float:
        return float(self.values[-1])

    def bottom_mask(self) -> np.ndarray:
        """Boolean mask of the eigenspace of lambda_d (relative tolerance)."""
        return self.values <= self.lam_min * (1.0 + _BOTTOM_RTOL)

    @property
    def bottom_multiplicity(self) -> int:
        return int(self.bottom_mask().sum())


@dataclass(frozen=True, eq=False)
class ZipfModel:
    """One-hot data model: example i is sqrt(scales[i]) * e_i w.p. probabilities[i].

    The label is y = <w_star, x> with no noise; randomness in the risk comes
    from the dataset draw and from the isotropic prior on w_star.
    """

    law: ZipfLaw
    d: int
    probabilities: np.ndarray
    scales: np.ndarray
    a: float | None = None
    b: float | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=np.float64)
        lam = np.asarray(self.scales, dtype=np.float64)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "scales", lam)
        if p.shape != (self.d,) or lam.shape != (self.d,):
            raise ValueError("probabilities and scales must have length d")
        if np.any(p <= 0.0) or np.any(lam <= 0.0):
            raise ValueError("probabilities and scales must be positive")
        if abs(p.sum() - 1.0) > _PROB_TOL:
            raise ValueError("probabilities must sum to 1")
        if np.any(np.diff(lam) > 0.0):
            raise ValueError("scales must be non-increasing")

    @property
    def covariance_diagonal(self) -> np.ndarray:
        """Diagonal of H = E[x x^T], i.e. probabilities * scales."""
        return self.probabilities * self.scales


@dataclass(frozen=True, eq=False)
class Problem:
    """A diagonal linear-regression instance.

    Fields:
        spectrum: eigenvalues of H, non-increasing.
        ground_truth: the target weights w_star.
        noise_std: label noise standard deviation sigma >= 0.
        init: starting weights w_0.
        data_bound: D with ||x|| <= D almost surely for the data source.
        zipf: the generating one-hot model when the data source is Zipf,
            None for Gaussian data.
    """

    spectrum: Spectrum
    ground_truth: np.ndarray
    noise_std: float
    init: np.ndarray
    data_bound: float
    zipf: ZipfModel | None = None

    def __post_init__(self) -> None:
        w_star = np.asarray(self.ground_truth, dtype=np.float64)
        w0 = np.asarray(self.init, dtype=np.float64)
        object.__setattr__(self, "ground_truth", w_star)
        object.__setattr__(self, "init", w0)
        d = self.spectrum.d
        if w_star.shape != (d,) or w0.shape != (d,):
            raise ValueError("ground_truth and init must match the spectrum dimension")
        if not (self.noise_std >= 0.0 and math.isfinite(self.noise_std)):
            raise ValueError("noise_std must be finite and >= 0")
        if not (self.data_bound > 0.0 and math.isfinite(self.data_bound)):
            raise ValueError("data_bound must be finite and positive")
        if self.spectrum.lam_max > self.data_bound**2 * (1.0 + 1e-12):
            raise ValueError("lambda_1 must not exceed data_bound**2")

    @property
    def d(self) -> int:
        return self.spectrum.d

    def initial_offset(self) -> np.ndarray:
        """theta_0 = w_0 - w_star."""
        return self.init - self.ground_truth

    def bottom_offset_energy(self) -> float:
        """Squared mass of theta_0 in the bottom eigenspace of H."""
        theta0 = self.initial_offset()
        mask = self.spectrum.bottom_mask()
        return float(np.sum(theta0[mask] ** 2))


@dataclass(frozen=True)
class SgdRun:
    """One multi-epoch SGD configuration.

    K passes over a dataset of N points with constant learning rate eta;
    `seed` keys every random draw of the run.  eta = 0 is allowed as the
    degenerate identity run.
    """

    epochs: int
    dataset_size: int
    eta: float
    seed: int

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.dataset_size < 1:
            raise ValueError("epochs and dataset_size must be >= 1")
        if not (self.eta >= 0.0 and math.isfinite(self.eta)):
            raise ValueError("eta must be finite and >= 0")

    @property
    def steps(self) -> int:
        return self.epochs * self.dataset_size

    def check_stability(self, problem: Problem) -> bool:
        """Whether eta satisfies the conservative bound eta <= 1/D**2."""
        return self.eta <= 1.0 / problem.data_bound**2


def make_gaussian_isotropic(d: int, sigma: float, seed: int) -> Problem:
    """Isotropic Gaussian problem: H = I_d, w_star ~ N(0, I_d), w_0 = 0.

    The data bound is set to sqrt(d) + 6, comfortably above the typical
    norm of a standard Gaussian vector in d dimensions.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    w_star = generator(seed, STREAM_TRUTH).standard_normal(d)
    return Problem(
        spectrum=Spectrum(np.ones(d)),
        ground_truth=w_star,
        noise_std=float(sigma),
        init=np.zeros(d),
        data_bound=math.sqrt(d) + 6.0,
    )


def make_zipf(law: ZipfLaw, a: float, b: float, d: int) -> ZipfModel:
    """Zipf one-hot model with a power or log-power spectrum.

    power:     p_i = c * i**-(a-b), scales_i = i**-b, requires a - b > 1.
    log_power: p_i = c * i**-a * log(i+1)**b, scales_i = log(i+1)**-b,
               requires a > 1 and b > 0.

    The normalizer c comes from direct summation over the d states.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    i = np.arange(1, d + 1, dtype=np.float64)
    if law == "power":
        if not a - b > 1.0:
            raise ValueError("power law requires a - b > 1")
        raw = i ** -(a - b)
        scales = i**-b
    elif law == "log_power":
        if not (a > 1.0 and b > 0.0):
            raise ValueError("log-power law requires a > 1 and b > 0")
        logs = np.log(i + 1.0)
        raw = i**-a * logs**b
        scales = logs**-b
    else:
        raise ValueError("use make_explicit_zipf for explicit models")
    return ZipfModel(law=law, d=d, probabilities=raw / raw.sum(), scales=scales, a=a, b=b)


def make_explicit_zipf(probabilities: Sequence[float], scales: Sequence[float]) -> ZipfModel:
    """Zipf model from explicit state probabilities and scales."""
    p = np.asarray(probabilities, dtype=np.float64)
    return ZipfModel(law="explicit", d=p.size, probabilities=p, scales=np.asarray(scales, dtype=np.float64))


def zipf_problem(model: ZipfModel, seed: int) -> Problem:
    """Simulation instance for a Zipf model.

    Draws w_star with i.i.d. standard normal coordinates (the isotropic
    prior used by the closed-form risk), starts at w_0 = 0 and carries no
    label noise.  Requires the covariance diagonal p_i * scales_i to be
    non-increasing so it can serve as the spectrum directly.
    """
    w_star = generator(seed, STREAM_TRUTH).standard_normal(model.d)
    return Problem(
        spectrum=Spectrum(model.covariance_diagonal),
        ground_truth=w_star,
        noise_std=0.0,
        init=np.zeros(model.d),
        data_bound=math.sqrt(float(model.scales[0])),
        zipf=model,
    )


def zipf_model_to_json(model: ZipfModel) -> dict:
    """Tagged JSON record; parametric laws store only their parameters."""
    if model.law == "explicit":
        return {
            "law": "explicit",
            "probabilities": model.probabilities.tolist(),
            "scales": model.scales.tolist(),
        }
    return {"law": model.law, "a": model.a, "b": model.b, "d": model.d}


def zipf_model_from_json(doc: dict) -> ZipfModel:
    law = doc["law"]
    if law == "explicit":
        return make_explicit_zipf(doc["probabilities"], doc["scales"])
    if law in ("power", "log_power"):
        return make_zipf(law, float(doc["a"]), float(doc["b"]), int(doc["d"]))
    raise ValueError(f"unknown zipf law: {law!r}")


def problem_to_json(problem: Problem) -> dict:
    return {
        "spectrum": problem.spectrum.values.tolist(),
        "ground_truth": problem.ground_truth.tolist(),
        "noise_std": problem.noise_std,
        "init": problem.init.tolist(),
        "data_bound": problem.data_bound,
        "zipf": None if problem.zipf is None else zipf_model_to_json(problem.zipf),
    }


def problem_from_json(doc: dict) -> Problem:
    zipf = doc.get("zipf")
    return Problem(
        spectrum=Spectrum(np.asarray(doc["spectrum"], dtype=np.float64)),
        ground_truth=np.asarray(doc["ground_truth"], dtype=np.float64),
        noise_std=float(doc["noise_std"]),
        init=np.asarray(doc["init"], dtype=np.float64),
        data_bound=float(doc["data_bound"]),
        zipf=None if zipf is None else zipf_model_from_json(zipf),
    )


def problem_dumps(problem: Problem) -> str:
    return json.dumps(problem_to_json(problem))


def problem_loads(text: str) -> Problem:
    return problem_from_json(json.loads(text))
