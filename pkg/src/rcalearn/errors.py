"""Exception types shared across the package."""


class RcaError(Exception):
    """Base class for all package errors."""


class ConfigError(RcaError):
    """Invalid, inconsistent, or unknown configuration."""


class DataError(RcaError):
    """Malformed or inconsistent input data."""


class GridMismatchError(DataError):
    """Series do not share the expected time grid."""


class InsufficientHistoryError(DataError):
    """Not enough samples before the trigger to fill the historical window."""


class NoIncidentError(DataError):
    """The trigger never fired on the KPI series."""


class WindowTooShortError(RcaError):
    """Input series shorter than the receptive field of the convolution."""


class NonFiniteError(RcaError):
    """A tensor value or gradient stopped being finite."""


class ConvergenceError(RcaError):
    """An iterative solver exceeded its iteration budget."""


class TrainingDivergedError(RcaError):
    """The training loss became non-finite and the batch was aborted."""
