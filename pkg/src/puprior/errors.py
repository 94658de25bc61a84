"""Exception hierarchy shared by every module."""


class PUPriorError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PUPriorError, ValueError):
    """A scalar parameter or grid is outside its admissible range."""


class ShapeError(PUPriorError, ValueError):
    """Array dimensions do not agree."""


class DomainError(PUPriorError, ValueError):
    """A point lies outside the finite domain of a conjugate function."""


class DataError(PUPriorError, ValueError):
    """Input data is malformed (non-finite values, unparsable CSV, too few samples)."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class DegenerateClassifierError(PUPriorError, RuntimeError):
    pass


class WindowError(PUPriorError, RuntimeError):
    """Too few ROC points near the right endpoint to fit a line."""


class ConvergenceError(PUPriorError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate and its residual are attached so callers can decide
    whether the answer is still usable.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
