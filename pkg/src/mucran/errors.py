"""Exception taxonomy shared across the package."""


class MucranError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MucranError, ValueError):
    """Invalid configuration: bad dims, layouts, hyperparameters, disallowed layers."""


class InputError(MucranError, ValueError):
    """Runtime input violates a precondition (shape/layout mismatch, out-of-range)."""


class UsageError(MucranError, RuntimeError):
    """API called out of order, e.g. backward without a prior forward."""


class NumericError(MucranError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class FormatError(MucranError, ValueError):
    """A serialized file is malformed (bad magic, version, or truncation)."""


class UndefinedMetricError(MucranError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""
