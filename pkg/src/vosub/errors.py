"""Exception types raised by the library."""


class InputError(ValueError):
    """Malformed or inconsistent input (dimension mismatch, empty grid, ...)."""


class DomainError(ValueError):
    """A construction was evaluated outside its admissible domain."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class NearSingularityError(DomainError):
    pass


class NumericalIntegrityError(ArithmeticError):
    """A computed quantity violates a property it must have (e.g. psi < 0)."""


class SymmetryIntegrityError(NumericalIntegrityError):
    pass


class CapabilityError(NotImplementedError):
    """The requested derivative or feature is not available for this object."""


class DegenerateFamilyError(ValueError):
    pass


class IncompatibilityError(ValueError):
    """Reference functions for which no admissible sigma exists."""


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class SemigroupAborted(RuntimeError):
    def __init__(self, message, run=None):
        super().__init__(message)
        self.run = run
