"""Experiment configuration and result records.

One JSON document drives one experiment; every field can be overridden from
the command line with --set key=value (dotted keys reach into nested
objects, values are parsed as JSON when possible).  The same document also
carries the fit stage's inputs so a sweep and its fit can share a config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Any

from ..reuse import McParams

EXPERIMENTS = (
    "strongly_convex_reuse",
    "zipf_power_reuse",
    "zipf_log_reuse",
    "oracle_check",
    "baseline_compare",
)

_SIMULATION_EXPERIMENTS = ("strongly_convex_reuse",)
_ZIPF_EXPERIMENTS = ("zipf_power_reuse", "zipf_log_reuse")
FIGURES = ("reuse_vs_n", "reuse_vs_k")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated inputs of one experiment sweep."""

    experiment: str
    k_grid: tuple[int, ...]
    n_grid: tuple[float, ...]
    base_seed: int = 20240501
    replicas: int = 500
    d: int = 100
    sigma: float = 0.1
    zipf: dict | None = None
    eta: float | None = None
    eta_hi: float | None = None
    c_grid: tuple[float, ...] = field(default_factory=lambda: McParams().c_grid)
    r_star: float = 15.39
    points_per_decade: int = 12
    workers: int | None = None
    record_timing: bool = True
    output_path: str | None = None
    plotdata_path: str | None = None
    figure: str = "reuse_vs_n"
    fit_input: str | None = None
    fit_epochs: int | None = None
    fit_transform: str = "x_power"

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; pick one of {EXPERIMENTS}")
        if len(self.k_grid) == 0 or len(self.n_grid) == 0:
            raise ValueError("k_grid and n_grid must be non-empty")
        if any(k < 1 for k in self.k_grid) or list(self.k_grid) != sorted(set(self.k_grid)):
            raise ValueError("k_grid must be strictly increasing integers >= 1")
        if any(n <= 0 for n in self.n_grid) or list(self.n_grid) != sorted(set(self.n_grid)):
            raise ValueError("n_grid must be strictly increasing and positive")
        if self.experiment in _SIMULATION_EXPERIMENTS:
            if self.replicas < 2:
                raise ValueError("simulation experiments need replicas >= 2")
            if any(float(n) != int(n) for n in self.n_grid):
                raise ValueError("simulation experiments need integer dataset sizes")
        if self.experiment in _ZIPF_EXPERIMENTS and self.zipf is None:
            raise ValueError(f"{self.experiment} requires a zipf model block")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.points_per_decade < 2:
            raise ValueError("points_per_decade must be >= 2")
        if self.figure not in FIGURES:
            raise ValueError(f"unknown figure {self.figure!r}; pick one of {FIGURES}")
        if self.fit_transform not in ("x_power", "log_x_power"):
            raise ValueError("fit_transform must be x_power or log_x_power")

    def zipf_law_for_experiment(self) -> str | None:
        if self.experiment == "zipf_power_reuse":
            return "power"
        if self.experiment == "zipf_log_reuse":
            return "log_power"
        return None


@dataclass(frozen=True)
class ResultRow:
    """One sweep cell.

    Metric fields are None when the experiment does not produce them or the
    cell failed; failures carry their message in `error`.  wall_time_seconds
    is None when timing is disabled (the mode that makes reruns
    byte-identical).
    """

    experiment: str
    epochs: int
    dataset_size: float
    eta_star: float | None
    risk_star: float | None
    risk_std_error: float | None
    n_prime: float | None
    e_value: float | None
    wall_time_seconds: float | None
    error: str | None = None


def _coerce(raw: dict[str, Any]) -> dict[str, Any]:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = dict(raw)
    if "k_grid" in out:
        out["k_grid"] = tuple(int(k) for k in out["k_grid"])
    if "n_grid" in out:
        out["n_grid"] = tuple(float(n) for n in out["n_grid"])
    if "c_grid" in out:
        out["c_grid"] = tuple(float(c) for c in out["c_grid"])
    return out


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    return ExperimentConfig(**_coerce(raw))


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply --set key=value pairs onto the raw config document.

    Dotted keys descend into nested objects (zipf.a=4.0); values are parsed
    as JSON when possible and kept as strings otherwise.
    """
    out = json.loads(json.dumps(raw))  # deep copy, JSON types only
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"cannot descend into non-object config key {part!r}")
        node[parts[-1]] = value
    return out


def load_config(path: str, overrides: list[str] | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return config_from_dict(raw)
