"""Exceptions and warning categories shared across the toolkit."""


class FitError(RuntimeError):
    """A fit could not produce a usable result."""


class ConvergenceError(FitError):
    """The optimizer hit its iteration cap before meeting the parameter tolerance.

    Carries the last iterate so callers can inspect how far the fit got.
    """

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class NoPeakError(FitError):
    """Spectrum has no usable peak structure (flat or featureless data)."""


class NoDecayError(FitError):
    """Arrival-time histogram has no resolvable decay past the peak."""


class DataFormatError(ValueError):
    """A data file violated its format contract."""

    def __init__(self, message, path=None, line_no=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
            if line_no is not None:
                loc = f"{path}:{line_no}: "
        super().__init__(loc + message)
        self.path = path
        self.line_no = line_no


class GridSpanWarning(UserWarning):
    """Evaluation grid clips a non-negligible part of the lineshape."""


class NormalizationWarning(UserWarning):
    """Correlation far-wing level disagrees with the rate-product normalization."""
