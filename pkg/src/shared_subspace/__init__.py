"""Multi-source domain adaptation with an approximately shared linear subspace.

Source environments are fit by OLS; the content subspace is read off the
smallest eigenvectors of the coefficient covariance; the target task is
fit by least squares biased toward the source mean inside that subspace
and shrunk outside it.
"""

from .finetune import (
    FinetuneConfig,
    FinetuneSolution,
    paper_lambda,
    projector,
    solve_baseline,
    solve_finetune,
)
from .metrics import (
    RiskReport,
    davis_kahan_audit,
    excess_risk,
    rep_covariance,
    rep_divergence,
    subspace_distances,
)
from .model import (
    EnvironmentDataset,
    GroundTruth,
    MetaDistribution,
    RngStream,
    generate_design,
    generate_environment,
    sample_environment_param,
    sample_ground_truth,
)
from .spectral import SourceFit, aggregate, extract_subspace, fit_ols, fit_sources

__version__ = "0.1.0"
