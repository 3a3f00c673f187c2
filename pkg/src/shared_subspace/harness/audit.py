"""Bound audits: Davis-Kahan per seed, sin-theta scaling in E, and the
excess-risk rate in n2 for the rule-regularised estimator."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import linalg

from ..finetune import FinetuneConfig, paper_lambda, solve_finetune
from ..metrics import davis_kahan_audit, excess_risk, subspace_distances
from ..spectral import fit_sources
from .config import ExperimentConfig
from .sweep import default_workers, make_ground_truth, make_sources, make_target, target_sample

THEORY_SLOPES = {"sin_theta_vs_E": -0.5, "excess_risk_vs_n2": -1.0}


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def audit_seed(cfg: ExperimentConfig, seed: int) -> dict:
    gt = make_ground_truth(cfg, seed)
    e_grid = sorted(set(cfg.audit_E_grid) | {cfg.E})
    envs = make_sources(cfg, seed, gt, E=max(e_grid))
    sin_by_e = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fits = {E: fit_sources(envs[:E], cfg.k, keep_params=False) for E in e_grid}
    for E, fit in fits.items():
        sin_by_e[E] = subspace_distances(fit.r1_hat, gt)[0]
    fit = fits[cfg.E]
    dk = davis_kahan_audit(fit, gt)

    target = make_target(cfg, seed, gt)
    risk = {}
    for n2 in cfg.n2_grid:
        train = target_sample(cfg, seed, target, n2, "target_train")
        test = target_sample(cfg, seed, target, cfg.test_rows, "target_test")
        eval_cov = test.X.T @ test.X / test.n
        lam, _ = paper_lambda(cfg.sigma, n2, float(linalg.eigvalsh(eval_cov)[0]))
        sol = solve_finetune(train, fit.r1_hat, fit.mean_param, FinetuneConfig(lambda1=lam, lambda2=lam))
        risk[n2] = excess_risk(sol.theta_hat, target.true_param, eval_cov)
    return {
        "seed": seed,
        "dk_lhs": dk.lhs,
        "dk_rhs": dk.rhs,
        "dk_holds": dk.holds,
        "cov_gap": dk.cov_gap,
        "sin_theta": sin_by_e[cfg.E],
        "sin_theta_by_E": sin_by_e,
        "excess_risk_by_n2": risk,
    }


def run_audit(cfg: ExperimentConfig, workers=None) -> dict:
    workers = default_workers(cfg) if workers is None else workers
    if workers <= 1 or cfg.seeds == 1:
        per_seed = [audit_seed(cfg, s) for s in range(cfg.seeds)]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.seeds)) as pool:
            per_seed = list(pool.map(audit_seed, [cfg] * cfg.seeds, range(cfg.seeds)))

    e_grid = sorted(cfg.audit_E_grid)
    med_sin = [float(np.median([s["sin_theta_by_E"][E] for s in per_seed])) for E in e_grid]
    med_risk = [float(np.median([s["excess_risk_by_n2"][n] for s in per_seed])) for n in cfg.n2_grid]
    holds = [s["dk_holds"] for s in per_seed]
    return {
        "config": cfg.to_dict(),
        "davis_kahan": {
            "E": cfg.E,
            "holds": sum(h is True for h in holds),
            "violated": sum(h is False for h in holds),
            "not_applicable": sum(h is None for h in holds),
            "median_sin_theta": float(np.median([s["sin_theta"] for s in per_seed])),
            "per_seed": [
                {k: s[k] for k in ("seed", "dk_lhs", "dk_rhs", "dk_holds", "cov_gap", "sin_theta")} for s in per_seed
            ],
        },
        "sin_theta_vs_E": {
            "E": e_grid,
            "median": med_sin,
            "slope": loglog_slope(e_grid, med_sin) if len(e_grid) > 1 else float("nan"),
            "theory_slope": THEORY_SLOPES["sin_theta_vs_E"],
        },
        "excess_risk_vs_n2": {
            "n2": list(cfg.n2_grid),
            "median": med_risk,
            "slope": loglog_slope(cfg.n2_grid, med_risk) if len(cfg.n2_grid) > 1 else float("nan"),
            "theory_slope": THEORY_SLOPES["excess_risk_vs_n2"],
        },
    }
