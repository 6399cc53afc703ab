class InvalidArgumentError(ValueError):
    """Raised when an operation receives arguments outside of its domain."""


class NumericalError(ArithmeticError):
    """Raised when the empirical risk can not be evaluated to a finite number.

    :param message: Error description.
    :type message: str
    :param index: Index of the offending observation, if known.
    :type index: int or None
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CalibrationError(RuntimeError):
    """Raised when too many posterior chains degenerate to estimate coverage."""


class StudyError(RuntimeError):
    """Raised when too many replications of a coverage study fail."""


class DegenerateChainWarning(UserWarning):
    """Emitted when a Markov chain never moves from its starting point."""
