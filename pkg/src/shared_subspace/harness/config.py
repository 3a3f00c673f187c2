"""Experiment configuration: defaults follow the linear synthetic benchmark
(E=999, n1=50, n2 up to 2000, d=10, k=6, sigma=0.01, theta*=6, L11=0.1, L22=3)."""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..errors import ConfigError
from ..model import MetaDistribution

METHODS = ("joint", "reg1_only", "reg2_only", "ols", "ridge")
LAMBDA_FREE = ("ols",)

_REAL_FIELDS = ("sigma", "theta_star_value", "lambda11_value", "lambda22_value", "sigma_for_rule", "ridge_lambda")
_OPTIONAL_FIELDS = ("sigma_for_rule", "ridge_lambda")
_BOOL_FIELDS = ("fixed_ground_truth", "shared_design_basis", "estimate_sigma", "record_timing")

_RULE_RE =re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*\s*)?rule\s*$")


@dataclass
class ExperimentConfig:
    d: int = 10
    k: int = 6
    E: int = 999
    n1: int = 50
    n2_grid: list = field(default_factory=lambda: [20, 50, 100, 200, 500, 1000, 2000])
    sigma: float = 0.01
    theta_star_value: float = 6.0
    lambda11_value: float = 0.1
    lambda22_value: float = 3.0
    methods: list = field(default_factory=lambda: ["joint", "reg1_only", "reg2_only", "ols"])
    lambda_mode: Any = "paper_rule"
    seeds: int = 20
    master_seed: int = 0
    fixed_ground_truth: bool = False
    output_path: str = "results.csv"
    # optional full-vector overrides of the scalar fields above
    theta_star: Optional[list] = None
    lambda11: Optional[list] = None
    lambda22: Optional[list] = None
    # "sqrt_n" makes X^T X / n independent of n; "unit" keeps singular values |s_i|
    design_scale: str = "sqrt_n"
    shared_design_basis: bool = False
    test_rows: int = 10000
    # None: the true sigma feeds the lambda rule
    sigma_for_rule: Optional[float] = None
    estimate_sigma: bool = False
    ridge_lambda: Optional[float] = None
    record_timing: bool = False
    audit_E_grid: list = field(default_factory=lambda: [50, 200, 999])
    workers: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for key in _REAL_FIELDS:
            val = getattr(self, key)
            if val is None and key in _OPTIONAL_FIELDS:
                continue
            if isinstance(val, bool) or not isinstance(val, (int, float, np.integer, np.floating)):
                raise ConfigError(key, f"must be a number, got {val!r}")
        for key in _BOOL_FIELDS:
            if not isinstance(getattr(self, key), bool):
                raise ConfigError(key, f"must be true or false, got {getattr(self, key)!r}")
        if not isinstance(self.output_path, str):
            raise ConfigError("output_path", "must be a string")
        for key in ("d", "k", "E", "n1", "seeds", "test_rows"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigError(key, f"must be a positive integer, got {val!r}")
        if not self.k < self.d:
            raise ConfigError("k", f"must be smaller than d={self.d}")
        if self.E < 2:
            raise ConfigError("E", "need at least 2 source environments")
        if not isinstance(self.n2_grid, (list, tuple)) or not self.n2_grid:
            raise ConfigError("n2_grid", "must be a nonempty list of integers")
        for n2 in self.n2_grid:
            if isinstance(n2, bool) or not isinstance(n2, (int, np.integer)) or n2 < 1:
                raise ConfigError("n2_grid", f"every entry must be an integer >= 1, got {n2!r}")
        if self.sigma < 0:
            raise ConfigError("sigma", "must be nonnegative")
        if not isinstance(self.methods, (list, tuple)) or not self.methods:
            raise ConfigError("methods", "must be a nonempty list")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError("methods", f"unknown method {m!r}; choose from {METHODS}")
        if self.design_scale not in ("unit", "sqrt_n"):
            raise ConfigError("design_scale", "must be 'unit' or 'sqrt_n'")
        if not isinstance(self.master_seed, (int, np.integer)) or isinstance(self.master_seed, bool):
            raise ConfigError("master_seed", "must be an integer")
        if not self.master_seed >= 0 or self.master_seed >= 1 << 64:
            raise ConfigError("master_seed", "must fit in an unsigned 64-bit integer")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers", "must be a positive integer")
        for n in self.audit_E_grid:
            if not isinstance(n, int) or n < 2:
                raise ConfigError("audit_E_grid", f"entries must be integers >= 2, got {n!r}")
        try:
            self.meta()
        except ValueError as exc:
            raise ConfigError("lambda11" if "lambda" in str(exc) else "theta_star", str(exc)) from exc
        self.lambda_points()

    def meta(self) -> MetaDistribution:
        k, d = self.k, self.d
        theta = self.theta_star if self.theta_star is not None else [self.theta_star_value] * k
        l11 = self.lambda11 if self.lambda11 is not None else [self.lambda11_value] * k
        l22 = self.lambda22 if self.lambda22 is not None else [self.lambda22_value] * (d - k)
        return MetaDistribution(d, k, np.asarray(theta, float), np.asarray(l11, float), np.asarray(l22, float), self.sigma)

    def lambda_points(self) -> list:
        """Normalised lambda specification as ``[(label, spec1, spec2), ...]``.

        Each spec is ``("abs", value)`` or ``("rule", multiplier)``.
        """
        mode = self.lambda_mode
        if mode == "paper_rule":
            return [("", ("rule", 1.0), ("rule", 1.0))]
        grid = None
        if isinstance(mode, dict) and set(mode) == {"grid"}:
            grid = mode["grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("lambda_mode", "must be 'paper_rule' or {\"grid\": [...]}")
        points = []
        for entry in grid:
            pair = entry if isinstance(entry, (list, tuple)) else [entry, entry]
            if len(pair) != 2:
                raise ConfigError("lambda_mode", f"grid entry {entry!r} must be a value or a pair")
            specs = [_parse_lambda(v) for v in pair]
            label = f"l1={_fmt_spec(specs[0])};l2={_fmt_spec(specs[1])}"
            points.append((label, specs[0], specs[1]))
        return points

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_lambda(value):
    if isinstance(value, bool):
        raise ConfigError("lambda_mode", f"bad lambda value {value!r}")
    if isinstance(value, (int, float)):
        if value < 0:
            raise ConfigError("lambda_mode", "lambda values must be nonnegative")
        return ("abs", float(value))
    if isinstance(value, str):
        m = _RULE_RE.match(value)
        if m:
            return ("rule", float(m.group(1)) if m.group(1) else 1.0)
        try:
            return _parse_lambda(float(value))
        except ValueError:
            pass
    raise ConfigError("lambda_mode", f"bad lambda value {value!r}; use a number, 'rule' or 'c*rule'")


def _fmt_spec(spec):
    kind, v = spec
    if kind == "abs":
        return f"{v:g}"
    return "rule" if v == 1.0 else f"{v:g}*rule"


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key, raw: str):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    if key == "n2_grid" and isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if key == "methods" and isinstance(value, str):
        value = [m.strip() for m in value.split(",") if m.strip()]
    if key == "n2_grid" and isinstance(value, str):
        try:
            value = [int(v) for v in value.split(",")]
        except ValueError:
            raise ConfigError(key, f"cannot parse {raw!r}") from None
    return value


def build_config(base: Optional[dict] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Merge a config dict with ``key -> raw string`` overrides and validate."""
    data = dict(base or {})
    for key in data:
        if key not in FIELDS:
            raise ConfigError(key, "unknown configuration key")
    for key, raw in (overrides or {}).items():
        if key not in FIELDS:
            raise ConfigError(key, "unknown configuration key")
        data[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from exc


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return build_config(data, overrides)
