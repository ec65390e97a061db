"""Exception hierarchy shared by all modules."""


class QGHeatError(Exception):
    """Base class for every error raised by qgheat."""


class GraphFileError(QGHeatError):
    """Graph description could not be read or parsed."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(QGHeatError, ValueError):
    """A structural invariant of the quantum graph is violated.

    ``where`` names the offending vertex or edge, ``invariant`` the rule.
    """

    def __init__(self, message, where=None, invariant=None):
        super().__init__(message)
        self.where = where
        self.invariant = invariant


class NoninvertibleError(ValidationError):
    pass


class InvalidPotentialError(ValidationError):
    pass


class DomainError(QGHeatError, ValueError):
    pass


class IntegrationError(QGHeatError, RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class AccuracyError(QGHeatError, RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class IncompleteSpectrumError(QGHeatError, RuntimeError):
    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class InsufficientSpectrumError(QGHeatError, RuntimeError):
    def __init__(self, message, required_lambda_max=None):
        super().__init__(message)
        self.required_lambda_max = required_lambda_max


class InconsistencyError(QGHeatError, RuntimeError):
    pass


class UnsupportedOrderError(QGHeatError, ValueError):
    pass


class UnsupportedConditionsError(QGHeatError, ValueError):
    pass


class UnsupportedProbeError(QGHeatError, ValueError):
    pass


class ConditioningError(QGHeatError, RuntimeError):
    pass
