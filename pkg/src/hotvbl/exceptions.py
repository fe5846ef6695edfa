"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when array shapes or operator orders are inconsistent."""


class NumericalError(ArithmeticError):
    """Raised when a factorization fails even after regularization."""


class ConsistencyError(RuntimeError):
    """Raised when an internal exactness check fails (indicates a bug)."""
