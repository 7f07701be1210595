"""Exception hierarchy shared by every module."""


class PredInfoError(Exception):
    """Base class for all errors raised by predinfo."""


class SequenceTooShortError(PredInfoError, ValueError):
    pass


class BatchTooSmallError(PredInfoError, ValueError):
    pass


class TooFewRowsError(PredInfoError, ValueError):
    pass


class NotPositiveDefiniteError(PredInfoError, ArithmeticError):
    """Raised when a matrix cannot be factorized even after the jitter ladder."""

    def __init__(self, message: str, block: str | None = None):
        super().__init__(message)
        self.block = block


class SingularSystemError(PredInfoError, ArithmeticError):
    pass


class InvalidParameterError(PredInfoError, ValueError):
    pass


class ShapeMismatchError(PredInfoError, ValueError):
    pass


class TapeReuseError(PredInfoError, RuntimeError):
    pass


class NonFiniteError(PredInfoError, ArithmeticError):
    """A loss or bound evaluated to NaN or infinity."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class ContextSpaceTooLargeError(PredInfoError, ValueError):
    pass


class GridMismatchError(PredInfoError, ValueError):
    pass


class ConfigError(PredInfoError, ValueError):
    pass
