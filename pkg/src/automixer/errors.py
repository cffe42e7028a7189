"""Exception types shared across the package.

Exit-code mapping in the CLI: ConfigurationError -> 2, DataError /
SchemaError -> 3, TrainingDiverged -> 4.
"""


class DimensionError(ValueError):
    """Shape or broadcast mismatch between operands."""


class ParameterError(ValueError):
    """Invalid hyperparameter value (e.g. dropout rate >= 1)."""


class DataError(ValueError):
    """Input data violates a contract (bad file, non-binary labels, ...)."""


class SchemaError(DataError):
    """Channel count or channel roles do not match the expected schema."""


class ConfigurationError(ValueError):
    """Inconsistent or infeasible configuration."""


class UsageError(RuntimeError):
    """Operation invoked outside its contract (e.g. backward on a non-scalar)."""


class TrainingDiverged(RuntimeError):
    """Raised when a NaN/Inf gradient or loss aborts training."""
