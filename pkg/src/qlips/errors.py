"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes; library code raises them
directly so callers can distinguish configuration mistakes from numerical
breakdown.
"""


class QlipsError(Exception):
    """Base class for all package errors."""


class DomainError(QlipsError):
    """A point or parameter lies outside its admissible domain."""


class SamplingError(QlipsError):
    """Rejection sampling failed to reach the requested counts."""


class ShapeError(QlipsError):
    """Array dimensions do not match the expected layout."""


class ConfigError(QlipsError):
    """Invalid or unknown configuration input."""


class NumericalError(QlipsError):
    """Non-finite values or a failed factorization."""
