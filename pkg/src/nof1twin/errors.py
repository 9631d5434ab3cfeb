"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, EstimatorError -> 4.
"""


class Nof1TwinError(Exception):
    """Base class for all package errors."""


class ConfigError(Nof1TwinError):
    """Invalid configuration or parameter values."""


class NonstationaryParamsError(ConfigError):
    """Long-run formulas requested for a nonstationary coefficient set."""


class DataError(Nof1TwinError):
    """Malformed or unusable input data."""


class EstimatorError(Nof1TwinError):
    """An estimator's preconditions failed or its computation degenerated."""


class ConvergenceError(EstimatorError):
    """An iterative fit did not converge within its iteration budget."""
