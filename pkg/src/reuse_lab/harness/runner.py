"""Experiment execution: sweeps over (K, N) grids, CSV and plot-data output.

Cells run through a bounded worker pool (REUSE_LAB_THREADS or the config's
`workers` caps it) and are reduced in grid order, so results do not depend
on scheduling.  Every per-cell failure becomes a row with an error tag
rather than aborting the sweep.  With record_timing disabled, rerunning a
config reproduces its CSV byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Iterable, Sequence

from ..closed_form import muennighoff_effective_n, zipf_risk, zipf_risk_enumerated
from ..model import (
    Problem,
    ZipfModel,
    make_explicit_zipf,
    make_gaussian_isotropic,
    zipf_model_from_json,
)
from ..reuse import (
    McParams,
    ReusePoint,
    curve_floor,
    effective_reuse_simulated,
    effective_reuse_zipf,
    predict_extension_size,
    tabulate_one_pass_curve,
    target_risk_simulated,
)
from ..rng import derive_seed
from ..sgd_sim import RiskEstimate
from .config import ExperimentConfig, ResultRow

# Seed sub-stream tags, distinct per role.
_SEED_PROBLEM = 1000
_SEED_CURVE = 1001
_SEED_CELLS = 1002

# Default Zipf model of the oracle-check experiment.
_ORACLE_DEFAULT = {"probabilities": [2.0 / 3.0, 1.0 / 3.0], "scales": [1.0, 0.5]}
_ORACLE_TOL = 1e-12

_CSV_FIELDS = (
    "experiment",
    "epochs",
    "dataset_size",
    "eta_star",
    "risk_star",
    "risk_std_error",
    "n_prime",
    "e_value",
    "wall_time_seconds",
    "error",
)


def _pool_size(config: ExperimentConfig) -> int:
    if config.workers is not None:
        return max(1, config.workers)
    env = os.environ.get("REUSE_LAB_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def _grid_cells(config: ExperimentConfig) -> list[tuple[int, float]]:
    return [(k, n) for k in config.k_grid for n in config.n_grid]


def _run_cells(
    config: ExperimentConfig,
    cell_fn: Callable[[int, float], ResultRow],
    flush: Callable[[Sequence[ResultRow]], None] | None = None,
) -> list[ResultRow]:
    """Evaluate every grid cell, tolerating per-cell failures."""
    cells = _grid_cells(config)

    def guarded(cell: tuple[int, float]) -> ResultRow:
        epochs, n = cell
        started = time.perf_counter()
        try:
            row = cell_fn(epochs, n)
        except Exception as exc:  # noqa: BLE001  (cell isolation is the point)
            row = ResultRow(
                experiment=config.experiment,
                epochs=epochs,
                dataset_size=float(n),
                eta_star=None,
                risk_star=None,
                risk_std_error=None,
                n_prime=None,
                e_value=None,
                wall_time_seconds=None,
                error=f"{type(exc).__name__}: {exc}",
            )
        if config.record_timing and row.error is None:
            row = replace(row, wall_time_seconds=time.perf_counter() - started)
        return row

    pool = min(_pool_size(config), len(cells))
    rows: list[ResultRow]
    if pool > 1:
        with ThreadPoolExecutor(max_workers=pool) as executor:
            rows = list(executor.map(guarded, cells))
    else:
        rows = []
        for cell in cells:
            rows.append(guarded(cell))
            if flush is not None:
                flush(rows)
    if flush is not None:
        flush(rows)
    return rows


def _zipf_model(config: ExperimentConfig) -> ZipfModel:
    doc = dict(config.zipf or {})
    law = config.zipf_law_for_experiment()
    if law is not None:
        doc.setdefault("law", law)
        if doc["law"] != law:
            raise ValueError(f"{config.experiment} requires a {law!r} zipf model")
    return zipf_model_from_json(doc)


def _run_zipf_reuse(
    config: ExperimentConfig,
    flush: Callable[[Sequence[ResultRow]], None] | None = None,
) -> list[ResultRow]:
    model = _zipf_model(config)

    def cell(epochs: int, n: float) -> ResultRow:
        point = effective_reuse_zipf(model, epochs, n, config.eta_hi)
        return _row_from_point(config, point)

    return _run_cells(config, cell, flush)


def _row_from_point(config: ExperimentConfig, point: ReusePoint) -> ResultRow:
    return ResultRow(
        experiment=config.experiment,
        epochs=point.epochs,
        dataset_size=point.dataset_size,
        eta_star=point.eta_star,
        risk_star=point.risk_star,
        risk_std_error=point.risk_std_error,
        n_prime=point.n_prime,
        e_value=point.e_value,
        wall_time_seconds=None,
        error=None,
    )


def _run_baseline(
    config: ExperimentConfig,
    flush: Callable[[Sequence[ResultRow]], None] | None = None,
) -> list[ResultRow]:
    def cell(epochs: int, n: float) -> ResultRow:
        n_prime = muennighoff_effective_n(epochs, n, config.r_star)
        return ResultRow(
            experiment=config.experiment,
            epochs=epochs,
            dataset_size=float(n),
            eta_star=None,
            risk_star=None,
            risk_std_error=None,
            n_prime=n_prime,
            e_value=n_prime / float(n),
            wall_time_seconds=None,
            error=None,
        )

    return _run_cells(config, cell, flush)


def _run_oracle_check(
    config: ExperimentConfig,
    flush: Callable[[Sequence[ResultRow]], None] | None = None,
) -> list[ResultRow]:
    if config.zipf is not None:
        model = zipf_model_from_json(config.zipf)
    else:
        model = make_explicit_zipf(**_ORACLE_DEFAULT)
    eta = 0.5 if config.eta is None else config.eta

    def cell(epochs: int, n: float) -> ResultRow:
        closed = zipf_risk(model, epochs, n, eta)
        enumerated = zipf_risk_enumerated(model, epochs, int(n), eta)
        diff = abs(closed - enumerated)
        return ResultRow(
            experiment=config.experiment,
            epochs=epochs,
            dataset_size=float(n),
            eta_star=eta,
            risk_star=closed,
            risk_std_error=None,
            n_prime=None,
            e_value=None,
            wall_time_seconds=None,
            error=None if diff <= _ORACLE_TOL else f"oracle mismatch: |diff| = {diff:.3e}",
        )

    return _run_cells(config, cell, flush)


def _ladder_points(lo: float, hi: float, per_decade: int) -> list[int]:
    """Integer sizes from the global log ladder 10^(k/per_decade) in [lo, hi]."""
    k_lo = math.floor(per_decade * math.log10(max(lo, 2.0)))
    k_hi = math.ceil(per_decade * math.log10(hi))
    points = {int(round(10 ** (k / per_decade))) for k in range(k_lo, k_hi + 1)}
    return sorted(t for t in points if lo <= t <= hi and t >= 2)


class _LazyCurve:
    """One-pass risk curve tabulated on demand along a fixed log ladder.

    All chunks share mc.base_seed, and replica streams are counter-based, so
    a point's estimate does not depend on which chunk tabulated it: extending
    the curve later reproduces exactly what a single up-front tabulation
    would have produced.
    """

    def __init__(self, problem: Problem, config: ExperimentConfig, mc: McParams):
        self.problem = problem
        self.config = config
        self.mc = mc
        self.points: dict[int, RiskEstimate] = {}

    def tabulate(self, sizes: Iterable[int]) -> None:
        new = sorted(set(int(t) for t in sizes) - set(self.points))
        if new:
            for t, est in tabulate_one_pass_curve(self.problem, new, self.mc):
                self.points[t] = est

    def as_list(self) -> list[tuple[int, RiskEstimate]]:
        return sorted(self.points.items())

    def floor(self) -> float:
        return curve_floor(self.as_list())

    def extend_to(self, t_hi: int) -> None:
        # always adds at least the next ladder knot: a prediction drawn from
        # the raw knots can stall at or below the current maximum while the
        # pooled tail still sits above the target band
        current_hi = max(self.points)
        ppd = self.config.points_per_decade
        k = math.floor(ppd * math.log10(current_hi)) + 1
        while int(round(10 ** (k / ppd))) <= current_hi:
            k += 1
        next_knot = int(round(10 ** (k / ppd)))
        self.tabulate(_ladder_points(current_hi + 1, max(t_hi, next_knot), ppd))

    def predict_size_for(self, risk: float) -> int:
        """Size at which the regularized curve should reach `risk`."""
        return predict_extension_size(self.as_list(), risk)


def _run_strongly_convex(
    config: ExperimentConfig,
    flush: Callable[[Sequence[ResultRow]], None] | None = None,
) -> list[ResultRow]:
    problem = make_gaussian_isotropic(config.d, config.sigma, derive_seed(config.base_seed, _SEED_PROBLEM))
    curve_mc = McParams(
        replicas=config.replicas,
        base_seed=derive_seed(config.base_seed, _SEED_CURVE),
        c_grid=config.c_grid,
        workers=config.workers,
    )
    cell_mc = McParams(
        replicas=config.replicas,
        base_seed=derive_seed(config.base_seed, _SEED_CELLS),
        c_grid=config.c_grid,
        workers=config.workers,
    )
    n_values = [int(n) for n in config.n_grid]
    curve = _LazyCurve(problem, config, curve_mc)
    curve.tabulate(
        _ladder_points(0.9 * min(n_values), 2.0 * max(n_values), config.points_per_decade)
        + n_values
    )

    # Cell targets first (the expensive half), so the curve can be extended
    # exactly as far as the hardest target requires before any matching.
    targets: dict[tuple[int, int], tuple[float, RiskEstimate]] = {}

    def target_cell(cell: tuple[int, float]) -> None:
        epochs, n = int(cell[0]), int(cell[1])
        if epochs == 1 and n in curve.points:
            return  # the curve point itself is the one-pass target
        targets[(epochs, n)] = target_risk_simulated(problem, epochs, n, cell_mc)

    cells = _grid_cells(config)
    pool = min(_pool_size(config), len(cells))
    errors: dict[tuple[int, int], str] = {}

    def guarded_target(cell: tuple[int, float]) -> None:
        try:
            target_cell(cell)
        except Exception as exc:  # noqa: BLE001
            errors[(int(cell[0]), int(cell[1]))] = f"{type(exc).__name__}: {exc}"

    if pool > 1:
        with ThreadPoolExecutor(max_workers=pool) as executor:
            list(executor.map(guarded_target, cells))
    else:
        for cell in cells:
            guarded_target(cell)

    # Extend the curve until its matchable floor reaches below every
    # target's band.  The floor is the regularized tail, not the raw
    # minimum, which can overstate the curve's reach.
    for _ in range(32):
        floor = curve.floor()
        uncovered = [
            est.mean * (1.0 - 4.0 * est.std_error / est.mean)
            for (eta, est) in targets.values()
            if est.mean * (1.0 - 4.0 * est.std_error / est.mean) < floor
        ]
        if not uncovered:
            break
        curve.extend_to(curve.predict_size_for(min(uncovered)))

    curve_list = curve.as_list()

    def cell_row(epochs: int, n: float) -> ResultRow:
        key = (int(epochs), int(n))
        if key in errors:
            raise RuntimeError(errors[key])
        point = effective_reuse_simulated(
            problem, int(epochs), int(n), curve_list, cell_mc, target=targets.get(key)
        )
        return _row_from_point(config, point)

    return _run_cells(config, cell_row, flush)


def run_experiment(
    config: ExperimentConfig,
    flush: Callable[[Sequence[ResultRow]], None] | None = None,
) -> list[ResultRow]:
    """Run one configured experiment and return its rows in grid order.

    `flush` (when given) receives the completed row prefix as cells finish,
    which the CLI uses to keep the output CSV current during long sweeps.
    """
    if config.experiment == "strongly_convex_reuse":
        return _run_strongly_convex(config, flush)
    if config.experiment in ("zipf_power_reuse", "zipf_log_reuse"):
        return _run_zipf_reuse(config, flush)
    if config.experiment == "oracle_check":
        return _run_oracle_check(config, flush)
    if config.experiment == "baseline_compare":
        return _run_baseline(config, flush)
    raise ValueError(f"unknown experiment {config.experiment!r}")


def _format_cell(value) -> str:
    if value is None:
        return ""
    return str(value)


def emit_csv(rows: Sequence[ResultRow], path: str) -> None:
    """Write rows as RFC-4180 CSV with shortest round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_FIELDS)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, name)) for name in _CSV_FIELDS])


def _parse_optional_float(text: str) -> float | None:
    return None if text == "" else float(text)


def parse_csv(path: str) -> list[ResultRow]:
    """Read emit_csv output back into rows (floats parse to identical values)."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != _CSV_FIELDS:
            raise ValueError(f"unexpected CSV header: {header}")
        rows = []
        for record in reader:
            values = dict(zip(_CSV_FIELDS, record))
            rows.append(
                ResultRow(
                    experiment=values["experiment"],
                    epochs=int(values["epochs"]),
                    dataset_size=float(values["dataset_size"]),
                    eta_star=_parse_optional_float(values["eta_star"]),
                    risk_star=_parse_optional_float(values["risk_star"]),
                    risk_std_error=_parse_optional_float(values["risk_std_error"]),
                    n_prime=_parse_optional_float(values["n_prime"]),
                    e_value=_parse_optional_float(values["e_value"]),
                    wall_time_seconds=_parse_optional_float(values["wall_time_seconds"]),
                    error=values["error"] or None,
                )
            )
    return rows


def emit_plotdata(rows: Sequence[ResultRow], figure: str, path: str) -> None:
    """Write figure-ready JSON, one series per K (reuse_vs_n) or per N.

    Only rows with an e_value participate; the x coordinate is log10 of the
    dataset size (reuse_vs_n) or the epoch count itself (reuse_vs_k).
    """
    usable = [row for row in rows if row.error is None and row.e_value is not None]
    series = []
    if figure == "reuse_vs_n":
        for epochs in sorted({row.epochs for row in usable}):
            group = [row for row in usable if row.epochs == epochs]
            group.sort(key=lambda row: row.dataset_size)
            series.append(
                {
                    "label": f"K={epochs}",
                    "epochs": epochs,
                    "x": [math.log10(row.dataset_size) for row in group],
                    "y": [row.e_value for row in group],
                }
            )
        x_axis = "log10_dataset_size"
    elif figure == "reuse_vs_k":
        for n in sorted({row.dataset_size for row in usable}):
            group = [row for row in usable if row.dataset_size == n]
            group.sort(key=lambda row: row.epochs)
            series.append(
                {
                    "label": f"N={n:g}",
                    "dataset_size": n,
                    "x": [row.epochs for row in group],
                    "y": [row.e_value for row in group],
                }
            )
        x_axis = "epochs"
    else:
        raise ValueError(f"unknown figure {figure!r}")
    doc = {
        "figure": figure,
        "x_axis": x_axis,
        "y_axis": "e_value",
        "series": series,
        "skipped_rows": len(rows) - len(usable),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")
