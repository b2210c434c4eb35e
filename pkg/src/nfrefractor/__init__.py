"""Near-field refractors: Jacobian formulas, the A3 form, oval envelopes and their oracles."""

from .errors import (CapViolation, ConfigError, ConvergenceError, DomainError, HypothesisViolation,
                     NoIntersectionError, QuadratureError, RefractorError, SingularMatrixError,
                     TotalInternalReflection)
from .refraction import MediaPair, RadialJet

__version__ = "0.1.0"

__all__ = [
    "CapViolation", "ConfigError", "ConvergenceError", "DomainError", "HypothesisViolation",
    "MediaPair", "NoIntersectionError", "QuadratureError", "RadialJet", "RefractorError",
    "SingularMatrixError", "TotalInternalReflection",
]
