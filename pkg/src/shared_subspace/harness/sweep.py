"""Seeded sweep execution.

Every random draw comes from an ``RngStream`` keyed by
``(master_seed, seed, env_index, role)``, so a seed's rows do not depend on
the number of seeds, the worker count, or the order in which cells run.

Per seed the target environment is fixed: its parameter, singular values
and right singular vectors are drawn once. Each few-shot size n2 then draws
a fresh left factor and noise for training, and a fresh test set of
``test_rows`` rows from the same environment. Excess risk is measured
against the test design's empirical covariance.
"""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy import linalg

from ..finetune import FinetuneConfig, paper_lambda, solve_baseline, solve_finetune
from ..metrics import davis_kahan_audit, excess_risk, subspace_distances, test_mse
from ..model import (
    EnvironmentDataset,
    GroundTruth,
    RngStream,
    draw_singular_values,
    generate_design,
    generate_environment,
    haar_orthogonal,
    sample_environment_param,
    sample_ground_truth,
)
from ..spectral import SourceFit, fit_sources, residual_sigma
from .config import LAMBDA_FREE, ExperimentConfig

log = logging.getLogger(__name__)

WORKERS_ENV = "SHARED_SUBSPACE_WORKERS"


@dataclass
class ResultRow:
    method: str
    seed: int
    E: int
    n1: int
    n2: int
    d: int
    k: int
    sigma: float
    lambda1: float
    lambda2: float
    target_mse: float
    excess_risk: float
    sin_theta: float
    procrustes_err: float
    # "true" / "false", "na" when the bound is vacuous, "error:<Type>" for failed cells
    dk_holds: str
    wall_ms: float

    def sort_key(self):
        return (self.method, self.n2, self.seed)


ROW_FIELDS = [f.name for f in fields(ResultRow)]


def stream(cfg: ExperimentConfig, seed, env_index, role) -> RngStream:
    return RngStream.derive(cfg.master_seed, seed, env_index, role)


def make_ground_truth(cfg: ExperimentConfig, seed: int) -> GroundTruth:
    key = (-1, -1, "ground_truth") if cfg.fixed_ground_truth else (seed, -1, "ground_truth")
    rng = RngStream.derive(cfg.master_seed, *key)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        meta = cfg.meta()
    return sample_ground_truth(meta, rng)


def make_sources(cfg: ExperimentConfig, seed: int, gt: GroundTruth, E: Optional[int] = None):
    E = cfg.E if E is None else E
    basis = None
    if cfg.shared_design_basis:
        basis = haar_orthogonal(cfg.d, rng=stream(cfg, seed, -1, "shared_basis"))
    return [
        generate_environment(gt, cfg.n1, e, stream(cfg, seed, e, "source"), scale=cfg.design_scale, basis=basis)
        for e in range(E)
    ]


@dataclass
class TargetEnvironment:
    true_param: np.ndarray
    singular_values: np.ndarray
    basis: np.ndarray


def make_target(cfg: ExperimentConfig, seed: int, gt: GroundTruth) -> TargetEnvironment:
    rng = stream(cfg, seed, cfg.E, "target")
    param = sample_environment_param(gt.meta, gt.rotation, rng)
    s = draw_singular_values(cfg.d, cfg.k, rng)
    basis = haar_orthogonal(cfg.d, rng=rng)
    if cfg.shared_design_basis:
        basis = haar_orthogonal(cfg.d, rng=stream(cfg, seed, -1, "shared_basis"))
    return TargetEnvironment(param, s, basis)


def target_sample(cfg: ExperimentConfig, seed: int, target: TargetEnvironment, n: int, role: str):
    rng = stream(cfg, seed, cfg.E, f"{role}:{n}")
    X = generate_design(
        n, cfg.d, cfg.k, rng, scale=cfg.design_scale, singular_values=target.singular_values, basis=target.basis
    )
    y = X @ target.true_param + cfg.sigma * rng.generator.standard_normal(n)
    return EnvironmentDataset(X=X, y=y, true_param=target.true_param, env_index=cfg.E)


def _resolve(spec, rule):
    kind, v = spec
    return v if kind == "abs" else v * rule


def _solve(method, target_env, fit: SourceFit, lam1, lam2, ridge_lambda):
    if method == "joint":
        return solve_finetune(target_env, fit.r1_hat, fit.mean_param, FinetuneConfig(lambda1=lam1, lambda2=lam2))
    if method == "reg1_only":
        return solve_baseline(target_env, "reg1_only", lam=lam1, r1_hat=fit.r1_hat, mean_param=fit.mean_param)
    if method == "reg2_only":
        return solve_baseline(target_env, "reg2_only", lam=lam2, r1_hat=fit.r1_hat)
    if method == "ridge":
        return solve_baseline(target_env, "ridge", lam=lam1 if ridge_lambda is None else ridge_lambda)
    return solve_baseline(target_env, "ols")


def _nan_row(cfg, method, seed, n2, tag):
    nan = float("nan")
    return ResultRow(method, seed, cfg.E, cfg.n1, n2, cfg.d, cfg.k, cfg.sigma, nan, nan, nan, nan, nan, nan, f"error:{tag}", 0.0)


def _method_labels(cfg: ExperimentConfig):
    points = cfg.lambda_points()
    for method in cfg.methods:
        if method in LAMBDA_FREE or len(points) == 1 and points[0][0] == "":
            yield method, points[0]
        else:
            for point in points:
                yield f"{method}[{point[0]}]", point


def run_seed(cfg: ExperimentConfig, seed: int) -> list:
    """All rows for one seed: one source fit, then every (n2, method, lambda) cell."""
    labels = list(_method_labels(cfg))
    rows = []
    try:
        gt = make_ground_truth(cfg, seed)
        envs = make_sources(cfg, seed, gt)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit = fit_sources(envs, cfg.k, keep_params=cfg.estimate_sigma)
        for w in caught:
            log.warning("seed %d: %s", seed, w.message)
        sigma_rule = cfg.sigma if cfg.sigma_for_rule is None else cfg.sigma_for_rule
        if cfg.estimate_sigma:
            sigma_rule = residual_sigma(envs, fit.per_env_params)
        del envs
        target = make_target(cfg, seed, gt)
        sin_theta, procrustes, _ = subspace_distances(fit.r1_hat, gt)
        audit = davis_kahan_audit(fit, gt)
    except Exception as exc:  # noqa: BLE001 - recorded per cell
        log.error("seed %d: source phase failed: %s", seed, exc)
        return [_nan_row(cfg, label, seed, n2, type(exc).__name__) for n2 in cfg.n2_grid for label, _ in labels]
    dk = "na" if audit.holds is None else ("true" if audit.holds else "false")

    for n2 in cfg.n2_grid:
        try:
            train = target_sample(cfg, seed, target, n2, "target_train")
            test = target_sample(cfg, seed, target, cfg.test_rows, "target_test")
            eval_cov = test.X.T @ test.X / test.n
            min_eig = float(linalg.eigvalsh(eval_cov)[0])
            rule, _ = paper_lambda(sigma_rule, n2, min_eig)
        except Exception as exc:  # noqa: BLE001
            log.error("seed %d n2 %d: %s", seed, n2, exc)
            rows.extend(_nan_row(cfg, label, seed, n2, type(exc).__name__) for label, _ in labels)
            continue
        for label, (_, spec1, spec2) in labels:
            method = label.split("[", 1)[0]
            lam1, lam2 = _resolve(spec1, rule), _resolve(spec2, rule)
            try:
                t0 = time.perf_counter()
                sol = _solve(method, train, fit, lam1, lam2, cfg.ridge_lambda)
                wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
            except Exception as exc:  # noqa: BLE001
                log.error("seed %d n2 %d %s: %s", seed, n2, label, exc)
                rows.append(_nan_row(cfg, label, seed, n2, type(exc).__name__))
                continue
            rows.append(
                ResultRow(
                    method=label,
                    seed=seed,
                    E=cfg.E,
                    n1=cfg.n1,
                    n2=n2,
                    d=cfg.d,
                    k=cfg.k,
                    sigma=cfg.sigma,
                    lambda1=sol.lambda1_used,
                    lambda2=sol.lambda2_used,
                    target_mse=test_mse(sol.theta_hat, test.X, test.y),
                    excess_risk=excess_risk(sol.theta_hat, target.true_param, eval_cov),
                    sin_theta=sin_theta,
                    procrustes_err=procrustes,
                    dk_holds=dk,
                    wall_ms=wall,
                )
            )
    return rows


def default_workers(cfg: Optional[ExperimentConfig] = None) -> int:
    if cfg is not None and cfg.workers is not None:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, env)
    return os.cpu_count() or 1


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> list:
    """Run every seed and return rows in canonical ``(method, n2, seed)`` order."""
    workers = default_workers(cfg) if workers is None else workers
    seeds = range(cfg.seeds)
    if workers <= 1 or cfg.seeds == 1:
        chunks = [run_seed(cfg, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.seeds)) as pool:
            chunks = list(pool.map(run_seed, [cfg] * cfg.seeds, seeds))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=ResultRow.sort_key)
    return rows


def is_error(row: ResultRow) -> bool:
    return row.dk_holds.startswith("error") or math.isnan(row.target_mse)
