"""Source phase: per-environment OLS, coefficient covariance, and the
content subspace as the eigenvectors of its k smallest eigenvalues."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateEigengapWarning,
    DimensionError,
    InsufficientEnvironmentsError,
    SingularDesignError,
    WellSeparationWarning,
)
from .model import EnvironmentDataset
from .serialize import dump_json, load_json

MAX_CONDITION = 1e12
MIN_RELATIVE_GAP = 0.5


@dataclass
class SourceFit:
    per_env_params: Optional[np.ndarray]
    mean_param: np.ndarray
    sample_cov: np.ndarray
    r1_hat: np.ndarray
    r2_hat: np.ndarray
    eigenvalues: np.ndarray

    @property
    def d(self) -> int:
        return self.mean_param.shape[0]

    @property
    def k(self) -> int:
        return self.r1_hat.shape[1]

    def to_dict(self, include_params: bool = False) -> dict:
        out = {
            "d": self.d,
            "k": self.k,
            "mean_param": self.mean_param,
            "sample_cov": self.sample_cov,
            "r1_hat": self.r1_hat,
            "r2_hat": self.r2_hat,
            "eigenvalues": self.eigenvalues,
        }
        if include_params and self.per_env_params is not None:
            out["per_env_params"] = self.per_env_params
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SourceFit":
        d, k = int(data["d"]), int(data["k"])
        params = data.get("per_env_params")
        fit = cls(
            per_env_params=None if params is None else np.asarray(params, dtype=float).reshape(-1, d),
            mean_param=np.asarray(data["mean_param"], dtype=float).reshape(d),
            sample_cov=np.asarray(data["sample_cov"], dtype=float).reshape(d, d),
            r1_hat=np.asarray(data["r1_hat"], dtype=float).reshape(d, k),
            r2_hat=np.asarray(data["r2_hat"], dtype=float).reshape(d, d - k),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float).reshape(d),
        )
        return fit

    def save(self, path, include_params: bool = False):
        dump_json(self.to_dict(include_params), path)

    @classmethod
    def load(cls, path) -> "SourceFit":
        return cls.from_dict(load_json(path))


def fit_ols(env: EnvironmentDataset, max_condition: float = MAX_CONDITION) -> np.ndarray:
    """Least-squares coefficients ``(X^T X)^{-1} X^T y`` via a QR factorisation."""
    X, y = env.X, env.y
    n, d = X.shape
    if n < d:
        raise SingularDesignError(
            f"singular design: {n} rows < {d} columns", env_index=env.env_index
        )
    q, r = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(r))
    sv = linalg.svdvals(r)
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if not np.isfinite(cond) or cond > max_condition or diag.min() == 0:
        raise SingularDesignError(
            f"singular design (condition number {cond:.3g})",
            condition_number=cond,
            env_index=env.env_index,
        )
    return linalg.solve_triangular(r, q.T @ y)


def aggregate(params) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance (divisor E) of the stacked per-environment estimates."""
    params = np.asarray(params, dtype=float)
    if params.ndim != 2 or params.shape[0] < 2:
        raise InsufficientEnvironmentsError(
            f"insufficient environments: need at least 2, got {0 if params.ndim != 2 else params.shape[0]}"
        )
    mean = params.mean(axis=0)
    centred = params - mean
    cov = centred.T @ centred / params.shape[0]
    return mean, (cov + cov.T) / 2


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    # make each column's largest-magnitude entry positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def extract_subspace(sample_cov: np.ndarray, k: int, sym_tol: float = 1e-9):
    """Split the eigenvectors of ``sample_cov`` at the k smallest eigenvalues.

    Returns ``(r1_hat, r2_hat, eigenvalues)`` with eigenvalues ascending.
    Columns are oriented so their largest-magnitude entry is positive.
    """
    cov = np.asarray(sample_cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"sample_cov must be square, got {cov.shape}")
    d = cov.shape[0]
    if not (1 <= k < d):
        raise ValueError(f"k out of range: need 1 <= k < {d}, got {k}")
    asym = np.abs(cov - cov.T).max()
    if asym > sym_tol * max(1.0, np.abs(cov).max()):
        raise ValueError(f"sample_cov is not symmetric (max asymmetry {asym:.3g})")
    w, v = linalg.eigh((cov + cov.T) / 2)
    order = np.argsort(w, kind="stable")
    w, v = w[order], _canonical_signs(v[:, order])
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    if w[k] - w[k - 1] <= 1e-12 * scale:
        warnings.warn(
            f"degenerate eigengap between eigenvalues {k} and {k + 1} ({w[k - 1]:.6g}, {w[k]:.6g})",
            DegenerateEigengapWarning,
            stacklevel=2,
        )
    return v[:, :k], v[:, k:], w


def check_separation(eigenvalues: np.ndarray, k: int, min_relative_gap: float = MIN_RELATIVE_GAP) -> float:
    """Relative gap ``(w[k] - w[k-1]) / w[k]``; warns when below the threshold."""
    lo, hi = eigenvalues[k - 1], eigenvalues[k]
    rel = (hi - lo) / hi if hi > 0 else 0.0
    if rel < min_relative_gap:
        warnings.warn(
            f"content and environmental spectra are not well separated "
            f"(relative gap {rel:.3g} < {min_relative_gap})",
            WellSeparationWarning,
            stacklevel=3,
        )
    return rel


def fit_sources(
    envs: Sequence[EnvironmentDataset],
    k: int,
    keep_params: bool = True,
    min_relative_gap: float = MIN_RELATIVE_GAP,
) -> SourceFit:
    """OLS on every source environment, then aggregate and split the spectrum."""
    envs = sorted(envs, key=lambda e: e.env_index)
    if len(envs) < 2:
        raise InsufficientEnvironmentsError(f"insufficient environments: got {len(envs)}")
    d = envs[0].d
    params = np.empty((len(envs), d))
    for i, env in enumerate(envs):
        if env.d != d:
            raise DimensionError(f"environment {env.env_index} has d={env.d}, expected {d}")
        try:
            params[i] = fit_ols(env)
        except SingularDesignError as exc:
            raise SingularDesignError(
                f"environment {env.env_index}: {exc}", exc.condition_number, env.env_index
            ) from exc
    mean, cov = aggregate(params)
    r1, r2, w = extract_subspace(cov, k)
    check_separation(w, k, min_relative_gap)
    return SourceFit(
        per_env_params=params if keep_params else None,
        mean_param=mean,
        sample_cov=cov,
        r1_hat=r1,
        r2_hat=r2,
        eigenvalues=w,
    )


def residual_sigma(envs: Sequence[EnvironmentDataset], params) -> float:
    """Pooled residual standard deviation of the source OLS fits.

    Plug-in noise level for the lambda rule when sigma is not known.
    """
    rss, dof = 0.0, 0
    for env, theta in zip(sorted(envs, key=lambda e: e.env_index), params):
        r = env.y - env.X @ theta
        rss += float(r @ r)
        dof += env.n - env.d
    if dof <= 0:
        raise ValueError("no residual degrees of freedom")
    return float(np.sqrt(rss / dof))
