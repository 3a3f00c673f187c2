"""Evaluation and theory audits: excess risk, subspace distances, the
Davis-Kahan perturbation check, and representation covariance/divergence
for linear feature maps ``x -> R^T x``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from .errors import DimensionError
from .model import GroundTruth
from .spectral import SourceFit


@dataclass
class RiskReport:
    excess_risk: float
    test_mse: float
    sin_theta: float
    procrustes_err: float
    cov_gap: float
    dk_lhs: float
    dk_rhs: float
    dk_holds: Optional[bool]


class DavisKahanAudit(NamedTuple):
    lhs: float
    rhs: float
    holds: Optional[bool]  # None when the eigengap is too small for the bound
    cov_gap: float
    eigengap: float

    @property
    def applicable(self) -> bool:
        return self.holds is not None


def op_norm(a) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0.0
    return float(linalg.svdvals(a)[0])


def excess_risk(theta_hat, true_param, eval_cov) -> float:
    """``0.5 * (theta_hat - theta)^T Sigma (theta_hat - theta)``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    true_param = np.asarray(true_param, dtype=float)
    eval_cov = np.asarray(eval_cov, dtype=float)
    d = true_param.shape[0]
    if theta_hat.shape != (d,) or eval_cov.shape != (d, d):
        raise DimensionError(
            f"theta_hat {theta_hat.shape}, true_param {true_param.shape}, eval_cov {eval_cov.shape}"
        )
    delta = theta_hat - true_param
    return max(0.0, 0.5 * float(delta @ eval_cov @ delta))


def test_mse(theta_hat, X, y) -> float:
    resid = np.asarray(y) - np.asarray(X) @ theta_hat
    return float(resid @ resid / resid.shape[0])


test_mse.__test__ = False  # not a pytest test


def _check_orthonormal(basis, tol=1e-8):
    k = basis.shape[1]
    err = np.linalg.norm(basis.T @ basis - np.eye(k))
    if err > tol:
        raise ValueError(f"columns are not orthonormal (||B^T B - I||_F = {err:.3g})")


def subspace_distances(r1_hat, gt: GroundTruth):
    """Sin-theta distance and Procrustes-aligned error to the true subspace.

    Returns ``(sin_theta, procrustes_err, aligned_O)`` where ``aligned_O``
    minimises ``||r1_hat - R1* O||`` over orthogonal O.
    """
    r1_hat = np.asarray(r1_hat, dtype=float)
    if r1_hat.shape != gt.r1.shape:
        raise DimensionError(f"r1_hat {r1_hat.shape} vs true basis {gt.r1.shape}")
    _check_orthonormal(r1_hat)
    sin_theta = op_norm(gt.r2.T @ r1_hat)
    u, _, vt = linalg.svd(gt.r1.T @ r1_hat)
    aligned = u @ vt
    procrustes = op_norm(r1_hat - gt.r1 @ aligned)
    return sin_theta, procrustes, aligned


def davis_kahan_audit(fit: SourceFit, gt: GroundTruth) -> DavisKahanAudit:
    """Check ``||R1_hat - R1* O|| <= 2 E / (gap - E)`` with ``E = ||Sigma_hat - Sigma_RM||``.

    ``gap = min(lambda22) - max(lambda11)``. When ``gap <= E`` the bound is
    vacuous and ``holds`` is ``None``.
    """
    meta = gt.meta
    cov_gap = op_norm(fit.sample_cov - gt.rotated_cov)
    gap = float(meta.lambda22.min() - meta.lambda11.max())
    _, lhs, _ = subspace_distances(fit.r1_hat, gt)
    if gap - cov_gap <= 0:
        return DavisKahanAudit(lhs, float("inf"), None, cov_gap, gap)
    rhs = 2 * cov_gap / (gap - cov_gap)
    return DavisKahanAudit(lhs, rhs, bool(lhs <= rhs + 1e-9), cov_gap, gap)


def risk_report(theta_hat, true_param, eval_cov, X_test, y_test, fit: SourceFit, gt: GroundTruth) -> RiskReport:
    sin_theta, procrustes, _ = subspace_distances(fit.r1_hat, gt)
    audit = davis_kahan_audit(fit, gt)
    return RiskReport(
        excess_risk=excess_risk(theta_hat, true_param, eval_cov),
        test_mse=test_mse(theta_hat, X_test, y_test),
        sin_theta=sin_theta,
        procrustes_err=procrustes,
        cov_gap=audit.cov_gap,
        dk_lhs=audit.lhs,
        dk_rhs=audit.rhs,
        dk_holds=audit.holds,
    )


def _check_maps(R, Rp, cov_x):
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Rp = np.atleast_2d(np.asarray(Rp, dtype=float))
    cov_x = np.asarray(cov_x, dtype=float)
    d = cov_x.shape[0]
    if cov_x.shape != (d, d) or R.shape[0] != d or Rp.shape[0] != d:
        raise DimensionError(f"R {R.shape}, Rp {Rp.shape}, cov_x {cov_x.shape}")
    return R, Rp, cov_x


def rep_covariance(R, Rp, cov_x) -> np.ndarray:
    """``E[(R^T x)(Rp^T x)^T] = R^T Sigma_x Rp`` for zero-mean x."""
    R, Rp, cov_x = _check_maps(R, Rp, cov_x)
    return R.T @ cov_x @ Rp


def symmetric_covariance(R, Rp, cov_x) -> np.ndarray:
    """Block matrix ``[[S(R,R), S(R,Rp)], [S(Rp,R), S(Rp,Rp)]]``; always PSD."""
    R, Rp, cov_x = _check_maps(R, Rp, cov_x)
    B = np.hstack([R, Rp])
    S = B.T @ cov_x @ B
    return (S + S.T) / 2


def rep_divergence(R, Rp, cov_x, rtol: float = 1e-10) -> np.ndarray:
    """Schur complement ``S(Rp,Rp) - S(Rp,R) S(R,R)^+ S(R,Rp)``.

    Measures how much of the ``Rp`` features is not linearly explained by
    the ``R`` features. The pseudo-inverse drops singular values below
    ``rtol`` times the largest.
    """
    R, Rp, cov_x = _check_maps(R, Rp, cov_x)
    s_rr = R.T @ cov_x @ R
    s_rp = R.T @ cov_x @ Rp
    s_pp = Rp.T @ cov_x @ Rp
    pinv = linalg.pinvh((s_rr + s_rr.T) / 2, rtol=rtol) if s_rr.size else s_rr
    D = s_pp - s_rp.T @ pinv @ s_rp
    return (D + D.T) / 2


def max_dominance(S_q, S_qp) -> float:
    """Largest alpha with ``S_q - alpha S_qp`` PSD, for PSD ``S_qp`` with full rank.

    Equals the smallest generalised eigenvalue of the pencil ``(S_q, S_qp)``.
    """
    w = linalg.eigh(S_q, S_qp, eigvals_only=True)
    return float(w[0])
