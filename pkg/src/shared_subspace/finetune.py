"""Target phase: biased-regularised least squares solved in closed form.

The estimator minimises

    (1/2n) ||y - X theta||^2
        + (lambda1/2) ||P (theta - theta_bar)||^2
        + (lambda2/2) ||P_perp theta||^2

where ``P`` projects onto the learned content subspace and ``theta_bar`` is
the mean of the source estimates. Its minimiser solves ``C theta = b`` with
``C = X^T X / n + lambda1 P + lambda2 P_perp`` and
``b = X^T y / n + lambda1 P theta_bar``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DimensionError, RuleUndefinedError, SingularDesignError, SingularSystemError
from .model import EnvironmentDataset
from .serialize import dump_json
from .spectral import fit_ols

MAX_SYSTEM_CONDITION = 1e12
BASELINES = ("ols", "ridge", "reg1_only", "reg2_only")


@dataclass
class FinetuneConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda_rule: str = "manual"
    sigma_for_rule: float = 0.0
    # None: use the smallest eigenvalue of X^T X / n2 on the target
    sigma_x_min_eig: Optional[float] = None

    def __post_init__(self):
        if self.lambda_rule not in ("manual", "paper_rule"):
            raise ValueError(f"unknown lambda_rule {self.lambda_rule!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")


@dataclass
class FinetuneSolution:
    theta_hat: np.ndarray
    lambda1_used: float
    lambda2_used: float
    objective_value: float
    gradient_norm: float

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path):
        dump_json(self.to_dict(), path)


def projector(basis: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Orthogonal projector ``B B^T`` onto the span of orthonormal columns."""
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2:
        raise DimensionError("basis must be a matrix")
    k = basis.shape[1]
    err = np.linalg.norm(basis.T @ basis - np.eye(k))
    if err > tol:
        raise ValueError(f"basis columns are not orthonormal (||B^T B - I||_F = {err:.3g})")
    p = basis @ basis.T
    return (p + p.T) / 2


def paper_lambda(sigma: float, n2: int, sigma_x_min_eig: float) -> tuple[float, float]:
    """``lambda1 = lambda2 = lambda_min(Sigma_X) * sigma / (sqrt(n2) - sigma)``."""
    denom = np.sqrt(n2) - sigma
    if denom <= 0:
        raise RuleUndefinedError(f"rule undefined: sqrt(n2)={np.sqrt(n2):g} <= sigma={sigma:g}")
    if sigma_x_min_eig <= 0:
        raise ValueError("sigma_x_min_eig must be positive")
    lam = float(sigma_x_min_eig * sigma / denom)
    return lam, lam


def _check_inputs(target, r1_hat, mean_param):
    d = target.d
    r1_hat = np.asarray(r1_hat, dtype=float)
    mean_param = np.asarray(mean_param, dtype=float)
    if r1_hat.ndim != 2 or r1_hat.shape[0] != d:
        raise DimensionError(f"r1_hat has {r1_hat.shape[0] if r1_hat.ndim == 2 else '?'} rows, target has d={d}")
    if mean_param.shape != (d,):
        raise DimensionError(f"mean_param has shape {mean_param.shape}, target has d={d}")
    return r1_hat, mean_param


def finetune_objective(theta, target, r1_hat, mean_param, lambda1, lambda2) -> float:
    p = projector(r1_hat)
    resid = target.y - target.X @ theta
    content = p @ (theta - mean_param)
    env = theta - p @ theta
    return float(resid @ resid / (2 * target.n) + lambda1 / 2 * content @ content + lambda2 / 2 * env @ env)


def finetune_gradient(theta, target, r1_hat, mean_param, lambda1, lambda2) -> np.ndarray:
    p = projector(r1_hat)
    X, y, n = target.X, target.y, target.n
    return X.T @ (X @ theta - y) / n + lambda1 * p @ (theta - mean_param) + lambda2 * (theta - p @ theta)


def _solve_spd(C, b):
    w = linalg.eigvalsh(C)
    if w[0] <= MAX_SYSTEM_CONDITION ** -1 * max(w[-1], 0.0) or w[-1] <= 0:
        raise SingularSystemError(
            f"singular system (eigenvalues of C in [{w[0]:.3g}, {w[-1]:.3g}])"
        )
    factor = linalg.cho_factor(C)
    theta = linalg.cho_solve(factor, b)
    # one step of iterative refinement
    theta += linalg.cho_solve(factor, b - C @ theta)
    return theta


def _regularised_system(target, p, mean_param, lambda1, lambda2):
    X, y, n = target.X, target.y, target.n
    d = target.d
    C = X.T @ X / n + lambda1 * p + lambda2 * (np.eye(d) - p)
    b = X.T @ y / n + lambda1 * p @ mean_param
    return (C + C.T) / 2, b


def resolve_lambdas(target: EnvironmentDataset, cfg: FinetuneConfig) -> tuple[float, float]:
    if cfg.lambda_rule == "manual":
        return float(cfg.lambda1), float(cfg.lambda2)
    min_eig = cfg.sigma_x_min_eig
    if min_eig is None:
        min_eig = float(linalg.eigvalsh(target.X.T @ target.X / target.n)[0])
    return paper_lambda(cfg.sigma_for_rule, target.n, min_eig)


def solve_finetune(
    target: EnvironmentDataset,
    r1_hat: np.ndarray,
    mean_param: np.ndarray,
    cfg: FinetuneConfig,
) -> FinetuneSolution:
    r1_hat, mean_param = _check_inputs(target, r1_hat, mean_param)
    lambda1, lambda2 = resolve_lambdas(target, cfg)
    if lambda1 == 0 and lambda2 == 0:
        # plain least squares; QR is better conditioned than C = X^T X / n
        try:
            theta = fit_ols(target)
        except SingularDesignError as exc:
            raise SingularSystemError(f"singular system: {exc}") from exc
    else:
        p = projector(r1_hat)
        C, b = _regularised_system(target, p, mean_param, lambda1, lambda2)
        try:
            theta = _solve_spd(C, b)
        except SingularSystemError:
            # b lies in range(C), so the minimiser set is an affine subspace;
            # take its minimum-norm point
            theta = linalg.lstsq(C, b, cond=None, lapack_driver="gelsd")[0]
    return FinetuneSolution(
        theta_hat=theta,
        lambda1_used=lambda1,
        lambda2_used=lambda2,
        objective_value=finetune_objective(theta, target, r1_hat, mean_param, lambda1, lambda2),
        gradient_norm=float(np.linalg.norm(finetune_gradient(theta, target, r1_hat, mean_param, lambda1, lambda2))),
    )


def solve_ridge(target: EnvironmentDataset, lam: float) -> FinetuneSolution:
    X, y, n = target.X, target.y, target.n
    C = X.T @ X / n + lam * np.eye(target.d)
    theta = _solve_spd((C + C.T) / 2, X.T @ y / n)
    resid = y - X @ theta
    grad = X.T @ (X @ theta - y) / n + lam * theta
    return FinetuneSolution(
        theta_hat=theta,
        lambda1_used=float(lam),
        lambda2_used=float(lam),
        objective_value=float(resid @ resid / (2 * n) + lam / 2 * theta @ theta),
        gradient_norm=float(np.linalg.norm(grad)),
    )


def solve_baseline(
    target: EnvironmentDataset,
    method: str,
    *,
    lam: float = 0.0,
    r1_hat: Optional[np.ndarray] = None,
    mean_param: Optional[np.ndarray] = None,
) -> FinetuneSolution:
    """Comparison estimators: plain OLS, ridge, or a single regulariser.

    ``reg1_only`` is the joint objective with ``lambda2 = 0`` and
    ``reg2_only`` the joint objective with ``lambda1 = 0``.
    """
    if method == "ols":
        theta = fit_ols(target)
        resid = target.y - target.X @ theta
        grad = target.X.T @ (-resid) / target.n
        return FinetuneSolution(theta, 0.0, 0.0, float(resid @ resid / (2 * target.n)), float(np.linalg.norm(grad)))
    if method == "ridge":
        return solve_ridge(target, lam)
    if r1_hat is None:
        raise ValueError(f"{method} needs r1_hat")
    if method == "reg1_only":
        if mean_param is None:
            raise ValueError("reg1_only needs mean_param")
        return solve_finetune(target, r1_hat, mean_param, FinetuneConfig(lambda1=lam, lambda2=0.0))
    if method == "reg2_only":
        mean = np.zeros(target.d) if mean_param is None else mean_param
        return solve_finetune(target, r1_hat, mean, FinetuneConfig(lambda1=0.0, lambda2=lam))
    raise ValueError(f"unknown baseline {method!r}; expected one of {BASELINES}")
