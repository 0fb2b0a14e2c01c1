"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives malformed input (non-finite values,
    wrong dimensions, non-convex vertex sets where convexity is required)."""


class SingularCovarianceError(ValueError):
    """Raised when a covariance matrix is not invertible even after
    regularization."""


class OracleFailureError(RuntimeError):
    """Raised when a finite-difference probe produces a non-finite value."""
