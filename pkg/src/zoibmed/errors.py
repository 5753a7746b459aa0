"""Exception types raised by zoibmed."""


class ZoibError(Exception):
    """Base class for package errors."""


class DomainError(ZoibError, ValueError):
    """An argument lies outside the support of the operation."""


class QuantileConvergenceError(ZoibError, ArithmeticError):
    """Beta quantile inversion failed; carries the last bracket."""

    def __init__(self, u, a, b, lo, hi):
        self.u, self.a, self.b, self.lo, self.hi = u, a, b, lo, hi
        super().__init__(
            f"beta quantile did not converge for u={u!r}, a={a!r}, b={b!r}; "
            f"last bracket [{lo!r}, {hi!r}]"
        )


class DataError(ZoibError, ValueError):
    """Input data fail validation. ``problems`` lists (row, message) pairs."""

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        super().__init__(message)


class FitError(ZoibError, RuntimeError):
    """A likelihood fit failed; ``component`` names the GLM component."""

    def __init__(self, message, component=None, trace=None):
        self.component = component
        self.trace = trace
        prefix = f"[{component}] " if component else ""
        super().__init__(prefix + message)


class SeparationError(FitError):
    """Logistic coefficients diverged (complete or quasi-complete separation)."""
