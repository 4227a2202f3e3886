"""Exception types raised by regot."""


class RegotError(Exception):
    """Base class for all regot errors."""


class DegenerateCostError(RegotError, ValueError):
    """Cost matrix has no strictly positive entry and cannot be normalized."""


class ValidationError(RegotError, ValueError):
    """A problem instance violates its marginal or shape invariants."""


class FormatError(RegotError, ValueError):
    """A problem file has a bad magic string or unsupported version."""


class TruncationError(FormatError):
    """A problem file ended before its declared payload."""


class OracleSizeError(RegotError, ValueError):
    """A dense oracle was requested for a problem too large to materialize."""


class StructureError(RegotError, ValueError):
    """A sparsity pattern is not usable for Cholesky factorization."""


class NotPositiveDefiniteError(RegotError, ArithmeticError):
    """A pivot fell below tolerance during numeric factorization."""

    def __init__(self, message, column=None, pivot=None):
        super().__init__(message)
        self.column = column
        self.pivot = pivot


class DirectionError(RegotError, ArithmeticError):
    """No descent direction could be produced."""


class LineSearchError(RegotError, ArithmeticError):
    """The line search found no point that decreases the objective."""


class StepError(RegotError):
    """A solver iteration failed; carries diagnostics and the partial trace."""

    def __init__(self, message, diagnostics=None, trace=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.trace = trace


class PlotError(RegotError, ValueError):
    """Nothing plottable was supplied."""
