"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: parameter/configuration problems are
usage errors (1), data problems are data errors (2) and solver failures are
numerical errors (3).
"""


class QPBenchError(Exception):
    """Base class for all package errors."""


class ParameterError(QPBenchError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(ParameterError):
    """A configuration is inconsistent (grid too coarse, step too large, ...)."""


class UnsupportedProfileError(ParameterError):
    """A taper target cannot be produced by a symmetric heat-and-pull."""


class DataError(QPBenchError, ValueError):
    """Input data is malformed (unsorted streams, bad files, empty spectra)."""


class InsufficientDataError(DataError):
    """Not enough signal to compute a requested statistic."""


class NoPeakError(DataError):
    """A spectrum has no peak significantly above its baseline."""


class NumericalError(QPBenchError, RuntimeError):
    """A root finder, eigen-solver or fit failed to converge."""
