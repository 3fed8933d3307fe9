"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
integration failures with 3.
"""


class QstError(Exception):
    """Base class for all package errors."""


class LayoutError(QstError):
    """Unknown subsystem label, duplicate label, or dimension mismatch."""


class DimensionError(QstError):
    """Operator or truncation dimension outside its valid range."""


class StateError(QstError):
    """Invalid quantum state: bad occupation, trace, hermiticity or tail."""


class ModelError(QstError):
    """Inconsistent model parameters (negative rates, zero detuning, ...)."""


class ScheduleError(QstError):
    """Ill-formed pulse schedule or evaluation outside its time span."""


class IntegrationError(QstError):
    """Step-size underflow or invariant violation during propagation."""


class CalibrationError(QstError):
    """Noiseless calibration run failed to reach the required fidelity."""


class ConfigError(QstError):
    """Config file syntax error, unknown key, or out-of-range value."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
