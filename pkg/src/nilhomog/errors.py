"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class HomogError(Exception):
    exit_code = 1


class InputError(HomogError, ValueError):
    """Malformed arguments or configuration."""

    exit_code = 2


class ResolutionError(HomogError):
    """A truncation (velocity ball, search radius) was too small."""

    exit_code = 3


class RangeError(HomogError):
    """A minimizer sits on the boundary of a finite search box."""

    exit_code = 3


class NonconvergenceError(HomogError):
    exit_code = 4

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class BoundedSearchError(HomogError):
    """Exhaustive enumeration exceeded its radius cap or memory budget."""

    exit_code = 5
