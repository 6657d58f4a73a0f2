"""Exception hierarchy shared by the sensing modules and the CLI."""


class InfoGreedyError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(InfoGreedyError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class ConfigError(ValidationError):
    """An experiment configuration is missing keys or has out-of-range values."""

    exit_code = 2


class DataError(InfoGreedyError):
    """An input data file is missing, truncated or malformed."""

    exit_code = 3

    def __init__(self, message, path=None, offset=None):
        details = []
        if path is not None:
            details.append(f"path={path}")
        if offset is not None:
            details.append(f"offset={offset}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.path = path
        self.offset = offset


class NumericalError(InfoGreedyError, ArithmeticError):
    """A numerical routine failed (non-finite iterate, degenerate denominator, ...)."""

    exit_code = 4


class ConvergenceError(NumericalError):
    """An iterative method did not reach its tolerance.

    The best iterate found so far is kept on ``best`` so callers can decide
    whether it is good enough.
    """

    def __init__(self, message, best=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.iterations = iterations
