"""Exception hierarchy shared by all modules."""


class CovbranchError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(CovbranchError, ValueError):
    """An offspring law, initial population or series violates its invariants."""


class CalibrationError(CovbranchError, ValueError):
    """No law of the requested family matches the target mean and q."""


class TruncationError(CovbranchError):
    """Support cap too small for an exact distribution.

    Attributes
    ----------
    deficit : float
        Probability mass lost beyond the cap.
    """

    def __init__(self, message, deficit):
        super().__init__(message)
        self.deficit = deficit


class ExplosionError(CovbranchError):
    """Simulated population exceeded the configured cap."""

    def __init__(self, message, day):
        super().__init__(message)
        self.day = day


class UndefinedEstimateError(CovbranchError, ArithmeticError):
    """Estimator denominator is zero on the requested day."""


class InsufficientDataError(CovbranchError):
    """Too few observations or bootstrap re-estimates."""


class ParseError(CovbranchError, ValueError):
    """A CSV row could not be turned into a case count.

    Attributes
    ----------
    line : int or None
        1-based line number in the source text.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
