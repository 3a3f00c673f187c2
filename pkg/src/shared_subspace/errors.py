"""Exception and warning types shared across the package."""


class DimensionError(ValueError):
    """Array shapes disagree with each other or with the model."""


class UnderdeterminedDesignError(ValueError):
    """Requested design has fewer rows than columns."""


class SingularDesignError(ValueError):
    """OLS design is rank deficient or too ill-conditioned to solve."""

    def __init__(self, message, condition_number=float("inf"), env_index=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.env_index = env_index


class InsufficientEnvironmentsError(ValueError):
    """Fewer than two source environments were supplied."""


class SingularSystemError(ValueError):
    """The regularised normal-equation matrix is not invertible."""


class RuleUndefinedError(ValueError):
    """The lambda rule denominator sqrt(n2) - sigma is not positive."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class WellSeparationWarning(UserWarning):
    """Content and environmental spectra are not separated by a positive gap."""


class DegenerateEigengapWarning(WellSeparationWarning):
    """Sample eigenvalues tie across the k / k+1 boundary."""
