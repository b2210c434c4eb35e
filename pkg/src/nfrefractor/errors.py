"""Exception hierarchy shared by every module of the package."""


class RefractorError(Exception):
    """Base class for all errors raised by nfrefractor."""


class DomainError(RefractorError, ValueError):
    """An input lies outside the domain where a formula is defined."""


class SingularMatrixError(RefractorError, ArithmeticError):
    """A matrix (or a rank-one denominator) is numerically singular."""


class HypothesisViolation(RefractorError):
    """One of the geometric hypotheses H1-H4 fails at a traced point.

    ``code`` is the hypothesis label, e.g. ``"H2"``.
    """

    def __init__(self, code, message):
        super().__init__(f"{code} violated: {message}")
        self.code = code


class NoIntersectionError(RefractorError):
    """A ray does not meet the receiver within the search range."""


class TotalInternalReflection(RefractorError):
    """Snell's law has no transmitted ray (only possible when kappa > 1)."""


class CapViolation(RefractorError, ValueError):
    """A direction is outside the refracting cap of a Cartesian oval."""


class ConvergenceError(RefractorError):
    """An iterative procedure did not reach its tolerance."""


class ConfigError(RefractorError, ValueError):
    """A run configuration is malformed or violates a hypothesis.

    ``field`` names the offending configuration entry.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class QuadratureError(RefractorError):
    """The quadrature grid is too coarse for the problem (a target receives no cell)."""
