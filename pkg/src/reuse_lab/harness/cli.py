"""Command-line front end.

    reuse-lab <subcommand> --config <path> [--set key=value ...]

Subcommands share one JSON config document; --set overrides individual
fields (dotted keys reach nested objects).  Exit status: 0 on success, 2
when some sweep cells failed but the run completed, 1 on fatal errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Sequence

from ..closed_form import approx_risk, optimal_lr, zipf_risk
from ..model import make_gaussian_isotropic, zipf_model_from_json, zipf_problem
from ..reuse import effective_reuse_zipf, fit_power_law
from ..rng import derive_seed
from ..sgd_sim import monte_carlo_risk
from .config import ExperimentConfig, ResultRow, load_config
from .runner import (
    _SEED_CELLS,
    _SEED_PROBLEM,
    _run_strongly_convex,
    _zipf_model,
    emit_csv,
    emit_plotdata,
    parse_csv,
    run_experiment,
)

_EXIT_OK = 0
_EXIT_FATAL = 1
_EXIT_PARTIAL = 2


def _print_json(payload) -> None:
    if dataclasses.is_dataclass(payload) and not isinstance(payload, type):
        payload = dataclasses.asdict(payload)
    json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")


def _emit_rows(config: ExperimentConfig, rows: list[ResultRow]) -> int:
    if config.output_path:
        emit_csv(rows, config.output_path)
        print(f"wrote {len(rows)} rows to {config.output_path}")
    else:
        _print_json([dataclasses.asdict(row) for row in rows])
    if config.plotdata_path:
        emit_plotdata(rows, config.figure, config.plotdata_path)
        print(f"wrote plot data to {config.plotdata_path}")
    failures = [row for row in rows if row.error is not None]
    for row in failures:
        print(f"cell K={row.epochs} N={row.dataset_size:g} failed: {row.error}", file=sys.stderr)
    return _EXIT_PARTIAL if failures else _EXIT_OK


def _metric_row(config: ExperimentConfig, epochs: int, n: float, eta: float, value: float, se: float | None) -> ResultRow:
    return ResultRow(
        experiment=config.experiment,
        epochs=epochs,
        dataset_size=float(n),
        eta_star=eta,
        risk_star=value,
        risk_std_error=se,
        n_prime=None,
        e_value=None,
        wall_time_seconds=None,
        error=None,
    )


def _problem_for(config: ExperimentConfig):
    seed = derive_seed(config.base_seed, _SEED_PROBLEM)
    if config.zipf is not None:
        return zipf_problem(zipf_model_from_json(config.zipf), seed)
    return make_gaussian_isotropic(config.d, config.sigma, seed)


def _cmd_sweep(config: ExperimentConfig) -> int:
    flush = None
    if config.output_path:
        path = config.output_path
        flush = lambda rows: emit_csv(rows, path)  # noqa: E731
    return _emit_rows(config, run_experiment(config, flush))


def _cmd_simulate(config: ExperimentConfig) -> int:
    problem = _problem_for(config)
    rows = []
    for epochs in config.k_grid:
        for n in config.n_grid:
            eta = config.eta if config.eta is not None else optimal_lr(problem, epochs, int(n))
            estimate = monte_carlo_risk(
                problem,
                epochs,
                int(n),
                eta,
                config.replicas,
                derive_seed(config.base_seed, _SEED_CELLS, epochs, int(n)),
                config.workers,
            )
            rows.append(_metric_row(config, epochs, n, eta, estimate.mean, estimate.std_error))
    return _emit_rows(config, rows)


def _cmd_closed_form(config: ExperimentConfig) -> int:
    rows = []
    if config.zipf is not None:
        if config.eta is None:
            raise ValueError("closed-form zipf evaluation requires eta")
        model = zipf_model_from_json(config.zipf)
        for epochs in config.k_grid:
            for n in config.n_grid:
                rows.append(_metric_row(config, epochs, n, config.eta, zipf_risk(model, epochs, n, config.eta), None))
    else:
        problem = _problem_for(config)
        for epochs in config.k_grid:
            for n in config.n_grid:
                eta = config.eta if config.eta is not None else optimal_lr(problem, epochs, int(n))
                rows.append(_metric_row(config, epochs, n, eta, approx_risk(problem, epochs, int(n), eta).total, None))
    return _emit_rows(config, rows)


def _cmd_reuse(config: ExperimentConfig) -> int:
    if len(config.k_grid) != 1 or len(config.n_grid) != 1:
        raise ValueError("reuse computes a single point; narrow the grids with --set k_grid=[K] --set n_grid=[N]")
    epochs, n = config.k_grid[0], config.n_grid[0]
    if config.experiment in ("zipf_power_reuse", "zipf_log_reuse"):
        point = effective_reuse_zipf(_zipf_model(config), epochs, n, config.eta_hi)
        _print_json(point)
        return _EXIT_OK
    if config.experiment == "strongly_convex_reuse":
        row = _run_strongly_convex(config)[0]
        if row.error is not None:
            raise RuntimeError(row.error)
        _print_json(row)
        return _EXIT_OK
    raise ValueError("reuse needs a strongly_convex_reuse or zipf_*_reuse experiment")


def _cmd_fit(config: ExperimentConfig) -> int:
    source = config.fit_input or config.output_path
    if not source:
        raise ValueError("fit needs fit_input (or output_path) pointing at a sweep CSV")
    rows = parse_csv(source)
    usable = [row for row in rows if row.error is None and row.e_value is not None]
    if config.fit_epochs is not None:
        usable = [row for row in usable if row.epochs == config.fit_epochs]
    points = [(row.dataset_size, row.e_value) for row in usable]
    fit = fit_power_law(points, config.fit_transform)
    _print_json(
        {
            "transform": config.fit_transform,
            "epochs": config.fit_epochs,
            "points": len(points),
            "c1": fit.c1,
            "c2": fit.c2,
            "r_squared": fit.r_squared,
        }
    )
    return _EXIT_OK


def _cmd_oracle_check(config: ExperimentConfig) -> int:
    if config.experiment != "oracle_check":
        config = dataclasses.replace(config, experiment="oracle_check")
    rows = run_experiment(config)
    status = _emit_rows(config, rows)
    mismatched = sum(1 for row in rows if row.error is not None)
    print(f"oracle check: {len(rows) - mismatched}/{len(rows)} cells agree")
    return status


_COMMANDS = {
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "closed-form": _cmd_closed_form,
    "reuse": _cmd_reuse,
    "fit": _cmd_fit,
    "oracle-check": _cmd_oracle_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="reuse-lab", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field (repeatable; dotted keys for nested objects)",
    )
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](config)
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
