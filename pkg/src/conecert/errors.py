"""Exception hierarchy shared by every module."""


class ConeCertError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(ConeCertError, ValueError):
    """Operands have incompatible dimensions."""


class ConvergenceError(ConeCertError, RuntimeError):
    """An iterative kernel ran out of iterations."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InvalidGeneratorError(ConeCertError, ValueError):
    """A cone generator is zero or not finite."""


class DomainError(ConeCertError, ValueError):
    """Input lies outside the domain of the operation (e.g. a non-proper cone)."""


class PreconditionError(ConeCertError):
    """A theorem hypothesis (usually cone invariance) does not hold."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or {}


class SolverStalledError(ConeCertError, RuntimeError):
    """The simplex method hit its iteration cap."""


class VerificationError(ConeCertError):
    """A gain or certificate failed independent re-verification."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class UnsupportedDimensionError(ConeCertError, ValueError):
    """The operation only supports a specific state dimension."""
