"""Exception types raised across the package."""


class SparseODEError(Exception):
    """Base class for package errors."""


class InvalidConfigurationError(SparseODEError, ValueError):
    pass


class InvalidDataError(SparseODEError, ValueError):
    pass


class DomainError(SparseODEError, ValueError):
    pass


class NumericError(SparseODEError, ArithmeticError):
    pass


class ConvergenceFailure(SparseODEError, RuntimeError):
    """A solver could not produce a finite iterate; ``last`` holds the last good one."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class FitFailure(SparseODEError, RuntimeError):
    """Every tuning candidate failed; ``diagnostics`` maps candidate to reason."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
