"""Data reuse in linear regression: multi-epoch SGD simulation, closed-form
risk formulas, and effective reuse rates measured against one-pass training."""

from ._kernels import BACKEND
from .closed_form import (
    RiskBreakdown,
    StabilityWarning,
    approx_risk,
    muennighoff_effective_n,
    optimal_lr,
    simplified_risk,
    zipf_risk,
    zipf_risk_enumerated,
)
from .model import (
    Problem,
    SgdRun,
    Spectrum,
    ZipfModel,
    make_explicit_zipf,
    make_gaussian_isotropic,
    make_zipf,
    problem_from_json,
    problem_to_json,
    zipf_model_from_json,
    zipf_model_to_json,
    zipf_problem,
)
from .reuse import (
    CurveRangeError,
    McParams,
    OptimalRisk,
    PowerFit,
    ReusePoint,
    effective_reuse_simulated,
    effective_reuse_zipf,
    fit_power_law,
    minimize_risk,
    predicted_plateau,
    risk_star_zipf,
    tabulate_one_pass_curve,
    target_risk_simulated,
)
from .sgd_sim import (
    RiskEstimate,
    SgdDivergenceError,
    Trajectory,
    draw_run_data,
    excess_risk,
    mc_risk_over_etas,
    monte_carlo_risk,
    run_on_data,
    run_sgd,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CurveRangeError",
    "McParams",
    "OptimalRisk",
    "PowerFit",
    "Problem",
    "ReusePoint",
    "RiskBreakdown",
    "RiskEstimate",
    "SgdDivergenceError",
    "SgdRun",
    "Spectrum",
    "StabilityWarning",
    "Trajectory",
    "ZipfModel",
    "__version__",
    "approx_risk",
    "draw_run_data",
    "effective_reuse_simulated",
    "effective_reuse_zipf",
    "excess_risk",
    "fit_power_law",
    "make_explicit_zipf",
    "make_gaussian_isotropic",
    "make_zipf",
    "mc_risk_over_etas",
    "minimize_risk",
    "monte_carlo_risk",
    "muennighoff_effective_n",
    "optimal_lr",
    "predicted_plateau",
    "problem_from_json",
    "problem_to_json",
    "risk_star_zipf",
    "run_on_data",
    "run_sgd",
    "simplified_risk",
    "tabulate_one_pass_curve",
    "target_risk_simulated",
    "zipf_model_from_json",
    "zipf_model_to_json",
    "zipf_problem",
    "zipf_risk",
    "zipf_risk_enumerated",
]
