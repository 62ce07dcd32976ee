"""Exception hierarchy shared by the library and the CLI."""


class LabelCVaRError(Exception):
    """Base class for all errors raised by this package."""


class DataError(LabelCVaRError, ValueError):
    """Malformed or unusable input data (empty classes, bad CSV rows, ...)."""


class InfeasibleSetError(LabelCVaRError, ValueError):
    """The requested uncertainty set contains no admissible weighting."""


class NumericalError(LabelCVaRError, ArithmeticError):
    """A numerical routine produced a non-finite value or failed to converge."""
