"""Ground-truth linear generative model and synthetic environment datasets.

Each environment e has a true parameter ``R* theta*e`` where
``theta*e ~ N([theta*; 0], diag(lambda11, lambda22))`` and responses
``y = X R* theta*e + z`` with ``z ~ N(0, sigma^2 I)``. Designs are built from
their SVD, ``X = U S V^T`` with Haar factors, the top-k singular values drawn
from N(5, 1) and the rest from N(0, 1).
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DimensionError, UnderdeterminedDesignError, WellSeparationWarning

CONTENT_SV_MEAN = 5.0
ENVIRONMENT_SV_MEAN = 0.0

_MASK64 = (1 << 64) - 1


def derive_stream_id(*keys) -> int:
    """Hash an arbitrary tuple of keys into a 64-bit stream id."""
    digest = hashlib.blake2b(repr(keys).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class RngStream:
    """A reproducible random stream keyed by ``(master_seed, stream_id)``.

    The underlying generator is created lazily and then consumed statefully,
    so successive calls on the same stream yield successive draws.
    """

    master_seed: int
    stream_id: int = 0
    _gen: Optional[np.random.Generator] = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def derive(cls, master_seed: int, *keys) -> "RngStream":
        return cls(master_seed, derive_stream_id(*keys))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence([self.master_seed & _MASK64, self.stream_id & _MASK64])
            self._gen = np.random.Generator(np.random.PCG64(seq))
        return self._gen


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class MetaDistribution:
    """Gaussian meta-distribution of environment parameters.

    ``lambda11`` (length k) and ``lambda22`` (length d - k) are the diagonal
    variances of the content and environmental coordinates, ascending.
    """

    d: int
    k: int
    theta_star: np.ndarray
    lambda11: np.ndarray
    lambda22: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        self.lambda11 = np.asarray(self.lambda11, dtype=float)
        self.lambda22 = np.asarray(self.lambda22, dtype=float)
        if not (1 <= self.k < self.d):
            raise DimensionError(f"need 1 <= k < d, got k={self.k}, d={self.d}")
        if self.theta_star.shape != (self.k,) or self.lambda11.shape != (self.k,):
            raise DimensionError("theta_star and lambda11 must have length k")
        if self.lambda22.shape != (self.d - self.k,):
            raise DimensionError("lambda22 must have length d - k")
        if np.any(self.lambda11 < 0) or np.any(self.lambda22 < 0) or self.sigma < 0:
            raise ValueError("variances and sigma must be nonnegative")
        if np.any(np.diff(self.lambda11) < 0) or np.any(np.diff(self.lambda22) < 0):
            raise ValueError("lambda11 and lambda22 must be sorted ascending")
        if self.eigengap <= 0:
            warnings.warn(
                f"no positive eigengap: max(lambda11)={self.lambda11.max():g} >= "
                f"min(lambda22)={self.lambda22.min():g}",
                WellSeparationWarning,
                stacklevel=2,
            )

    @classmethod
    def isotropic(cls, d, k, theta_value, lambda11_value, lambda22_value, sigma=0.0):
        """Scalar-times-ones/identity parameters, as in the synthetic benchmark."""
        return cls(
            d=d,
            k=k,
            theta_star=np.full(k, float(theta_value)),
            lambda11=np.full(k, float(lambda11_value)),
            lambda22=np.full(d - k, float(lambda22_value)),
            sigma=float(sigma),
        )

    @property
    def eigengap(self) -> float:
        return float(self.lambda22.min() - self.lambda11.max())

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([self.theta_star, np.zeros(self.d - self.k)])

    @property
    def variances(self) -> np.ndarray:
        return np.concatenate([self.lambda11, self.lambda22])


@dataclass
class GroundTruth:
    rotation: np.ndarray
    meta: MetaDistribution

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        d = self.meta.d
        if self.rotation.shape != (d, d):
            raise DimensionError(f"rotation must be {d}x{d}, got {self.rotation.shape}")
        err = np.linalg.norm(self.rotation.T @ self.rotation - np.eye(d))
        if err > 1e-10:
            raise ValueError(f"rotation is not orthogonal (||R^T R - I||_F = {err:.3g})")

    @property
    def r1(self) -> np.ndarray:
        return self.rotation[:, : self.meta.k]

    @property
    def r2(self) -> np.ndarray:
        return self.rotation[:, self.meta.k :]

    @property
    def rotated_cov(self) -> np.ndarray:
        """Covariance of ``R* theta*e``: ``R1 L11 R1^T + R2 L22 R2^T``."""
        return (self.rotation * self.meta.variances) @ self.rotation.T

    @property
    def rotated_mean(self) -> np.ndarray:
        return self.r1 @ self.meta.theta_star


@dataclass
class EnvironmentDataset:
    X: np.ndarray
    y: np.ndarray
    true_param: Optional[np.ndarray] = None
    env_index: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionError(f"X {self.X.shape} and y {self.y.shape} disagree")
        if self.true_param is not None:
            self.true_param = np.asarray(self.true_param, dtype=float)
            if self.true_param.shape != (self.X.shape[1],):
                raise DimensionError("true_param must have length d")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def haar_orthogonal(n: int, p: Optional[int] = None, rng: RngLike = None) -> np.ndarray:
    """Haar-distributed ``n x p`` matrix with orthonormal columns.

    QR of a standard Gaussian matrix, with column signs fixed by the signs of
    ``diag(R)`` so that the result is exactly Haar rather than QR-biased.
    """
    p = n if p is None else p
    if p > n:
        raise DimensionError(f"cannot have {p} orthonormal columns in R^{n}")
    g = as_generator(rng).standard_normal((n, p))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_ground_truth(meta: MetaDistribution, rng: RngLike = None) -> GroundTruth:
    return GroundTruth(haar_orthogonal(meta.d, rng=rng), meta)


def sample_environment_param(meta: MetaDistribution, rotation: np.ndarray, rng: RngLike = None, size=None):
    """Draw ``R* theta*e`` with ``theta*e ~ N([theta*; 0], diag(L11, L22))``.

    With ``size`` given, returns an array of ``size`` stacked draws (rows).
    """
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (meta.d, meta.d):
        raise DimensionError(f"rotation {rotation.shape} does not match d={meta.d}")
    gen = as_generator(rng)
    shape = (meta.d,) if size is None else (size, meta.d)
    theta = meta.mean + np.sqrt(meta.variances) * gen.standard_normal(shape)
    return theta @ rotation.T


def draw_singular_values(d: int, k: int, rng: RngLike = None) -> np.ndarray:
    """Top-k from N(5, 1), the remaining d - k from N(0, 1), absolute values."""
    gen = as_generator(rng)
    means = np.r_[np.full(k, CONTENT_SV_MEAN), np.full(d - k, ENVIRONMENT_SV_MEAN)]
    return np.abs(means + gen.standard_normal(d))


def generate_design(
    n: int,
    d: int,
    k: int,
    rng: RngLike = None,
    *,
    scale: str = "unit",
    singular_values: Optional[np.ndarray] = None,
    basis: Optional[np.ndarray] = None,
    return_factors: bool = False,
):
    """Build an ``n x d`` design ``X = c U S V^T`` from random SVD factors.

    ``scale="unit"`` uses ``c = 1`` so the singular values of X are exactly
    the drawn ``|s_i|``. ``scale="sqrt_n"`` uses ``c = sqrt(n)`` so that
    ``X^T X / n = V S^2 V^T`` does not depend on n, giving the sample size
    its usual statistical meaning.

    ``singular_values`` replaces the random draw and ``basis`` fixes V
    (shared across environments); both are still validated.
    """
    if n < d:
        raise UnderdeterminedDesignError(
            f"underdetermined design unsupported by default generator (n={n} < d={d})"
        )
    if not (1 <= k < d):
        raise DimensionError(f"need 1 <= k < d, got k={k}, d={d}")
    if scale not in ("unit", "sqrt_n"):
        raise ValueError(f"unknown design scale {scale!r}")
    gen = as_generator(rng)
    s = draw_singular_values(d, k, gen)
    if singular_values is not None:
        s = np.asarray(singular_values, dtype=float)
        if s.shape != (d,):
            raise DimensionError("singular_values must have length d")
    u = haar_orthogonal(n, d, gen)
    v = haar_orthogonal(d, rng=gen)
    if basis is not None:
        v = np.asarray(basis, dtype=float)
        if v.shape != (d, d):
            raise DimensionError("basis must be d x d")
    c = np.sqrt(n) if scale == "sqrt_n" else 1.0
    X = c * (u * s) @ v.T
    if return_factors:
        return X, (u, s, v)
    return X


def generate_environment(
    gt: GroundTruth,
    n: int,
    env_index: int = 0,
    rng: RngLike = None,
    *,
    scale: str = "unit",
    true_param: Optional[np.ndarray] = None,
    basis: Optional[np.ndarray] = None,
) -> EnvironmentDataset:
    """Sample one environment: design, true parameter and noisy responses.

    Draw order is design, then parameter, then noise. Passing ``true_param``
    skips the parameter draw (used to pair a fixed target task with several
    designs).
    """
    meta = gt.meta
    gen = as_generator(rng)
    X = generate_design(n, meta.d, meta.k, gen, scale=scale, basis=basis)
    if true_param is None:
        true_param = sample_environment_param(meta, gt.rotation, gen)
    y = X @ true_param + meta.sigma * gen.standard_normal(n)
    return EnvironmentDataset(X=X, y=y, true_param=np.asarray(true_param, dtype=float), env_index=env_index)


def write_environment_csv(env: EnvironmentDataset, path) -> Path:
    """One row per sample, header ``x1..xd,y``, 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(env.d)] + ["y"])
        for row, yi in zip(env.X, env.y):
            writer.writerow([f"{v:.17g}" for v in row] + [f"{yi:.17g}"])
    return path


def read_environment_csv(path, env_index: int = 0) -> EnvironmentDataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
            raise ValueError(f"{path}: header must be x1..xd,y")
        rows = [[float(v) for v in r] for r in reader if r]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return EnvironmentDataset(X=data[:, :-1], y=data[:, -1], env_index=env_index)
