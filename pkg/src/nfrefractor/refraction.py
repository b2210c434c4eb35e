"""Snell refraction at a radial surface ``rho(x) X`` and its scalar coefficients.

The refractor separates a medium of index ``n1`` containing the point source
at the origin from a medium of index ``n2``; ``kappa = n1 / n2``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TotalInternalReflection
from .sphere import is_symmetric, lift

KAPPA_GAP = 1e-3


@dataclass(frozen=True)
class MediaPair:
    n1: float
    n2: float

    def __post_init__(self):
        if not (self.n1 > 0 and self.n2 > 0):
            raise DomainError("refractive indices must be positive")
        if abs(self.kappa - 1.0) < KAPPA_GAP:
            raise DomainError(f"|kappa - 1| must be at least {KAPPA_GAP}, got kappa = {self.kappa}")

    @property
    def kappa(self):
        return self.n1 / self.n2

    @property
    def regime(self):
        return "kappa<1" if self.kappa < 1.0 else "kappa>1"

    @classmethod
    def from_kappa(cls, kappa):
        return cls(float(kappa), 1.0)


@dataclass(frozen=True, eq=False)
class RadialJet:
    """Second order data ``(rho, grad rho, D^2 rho)`` at a chart point ``x``."""

    x: np.ndarray
    rho: float
    grad_rho: np.ndarray
    hess_rho: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        n = x.shape[0]
        p = np.asarray(self.grad_rho, dtype=float).reshape(n)
        H = np.asarray(self.hess_rho, dtype=float).reshape(n, n)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "grad_rho", p)
        object.__setattr__(self, "hess_rho", H)
        object.__setattr__(self, "rho", float(self.rho))
        if not x @ x < 1.0:
            raise DomainError("jet chart point must satisfy |x| < 1")
        if not self.rho > 0.0:
            raise DomainError(f"rho must be positive, got {self.rho}")
        if not is_symmetric(H):
            raise DomainError("hess_rho must be symmetric")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def X(self):
        return lift(self.x)

    def check_regime(self, kappa):
        """Gradient bound ``|grad rho|^2 <= rho^2/(kappa^2-1)`` required when kappa > 1."""
        if kappa > 1.0:
            bound = self.rho ** 2 / (kappa ** 2 - 1.0)
            if self.grad_rho @ self.grad_rho > bound:
                raise TotalInternalReflection(
                    f"|grad rho|^2 = {self.grad_rho @ self.grad_rho:.6g} exceeds rho^2/(kappa^2-1) = {bound:.6g}")


@dataclass(frozen=True)
class ScalarCoeffs:
    a: float
    q: float
    b: float
    alpha: float
    beta: float
    Q: float
    sigma: float
    gamma: float
    F: float


def _basic(jet, kappa):
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    xp = float(x @ p)
    pp = float(p @ p)
    a = rho * rho + pp - xp * xp
    if not a > 0.0:
        raise DomainError(f"degenerate jet: a = {a:.3g} <= 0")
    q2 = a - kappa * kappa * (a - rho * rho)
    if not q2 > 0.0:
        raise TotalInternalReflection(f"q^2 = {q2:.3g} <= 0: no transmitted ray")
    return xp, pp, a, np.sqrt(q2)


def scalar_coeffs(jet, kappa):
    """Coefficients ``a, q, b, alpha, beta, Q, sigma, gamma, F`` at the jet.

    Uses the cancellation-free forms ``b = (kappa^2-1)/(kappa rho + q)``,
    ``Q = (kappa^2-1) / (rho (kappa q + rho - (kappa^2-1) x·p))`` and
    ``gamma = Q (q - kappa x·p)``.
    """
    jet.check_regime(kappa)
    rho = jet.rho
    xp, pp, a, q = _basic(jet, kappa)
    k2 = kappa * kappa - 1.0
    b = k2 / (kappa * rho + q)
    alpha = -b * b / k2 * (kappa * q + rho + k2 * xp) / q
    beta = b * b / q
    Q = k2 / (rho * (kappa * q + rho - k2 * xp))
    sigma = kappa - b * (rho + xp)
    gamma = Q * (q - kappa * xp)
    F = sigma + alpha * pp - (alpha * (rho + xp) + 2.0 * b) * xp
    return ScalarCoeffs(a, q, b, alpha, beta, Q, sigma, gamma, F)


def scalar_coeffs_from_definitions(jet, kappa):
    """Same coefficients evaluated literally from their defining expressions.

    Kept apart from :func:`scalar_coeffs` so the two can be cross-checked.
    """
    jet.check_regime(kappa)
    rho, x, p = jet.rho, jet.x, jet.grad_rho
    a = rho ** 2 + p @ p - (p @ x) ** 2
    q = np.sqrt(a - kappa ** 2 * (a - rho ** 2))
    b = (kappa * rho - q) / a
    alpha = -(b ** 2) / (kappa ** 2 - 1) * ((kappa * q + rho + (kappa ** 2 - 1) * (x @ p)) / q)
    beta = b ** 2 / q
    Q = b / (q + b * (p @ p - (p @ x) * (rho + p @ x)))
    sigma = kappa - b * (rho + x @ p)
    gamma = b - Q * (sigma * (x @ p) + b * (p @ p))
    F = sigma + alpha * (p @ p) - (alpha * (rho + x @ p) + 2 * b) * (x @ p)
    return ScalarCoeffs(float(a), float(q), float(b), float(alpha), float(beta), float(Q),
                        float(sigma), float(gamma), float(F))


def refractor_normal(jet):
    """Unit normal of the surface ``rho(x) X`` pointing into the second medium."""
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    X = lift(x)
    a = rho * rho + p @ p - (x @ p) ** 2
    if not a > 0.0:
        raise DomainError(f"degenerate jet: a = {a:.3g} <= 0")
    return -(np.append(p, 0.0) - X * (rho + x @ p)) / np.sqrt(a)


def snell(X, nu, media):
    """Refract the unit direction ``X`` at a surface with unit normal ``nu``.

    ``nu`` points into the second medium (``X·nu > 0``). The result ``Y``
    satisfies ``X - Y/kappa = lambda nu``.
    """
    kappa = media.kappa if isinstance(media, MediaPair) else float(media)
    X = np.asarray(X, dtype=float)
    nu = np.asarray(nu, dtype=float)
    c = float(X @ nu)
    if not c > 0.0:
        raise DomainError(f"incidence requires X·nu > 0, got {c:.3g}")
    disc = 1.0 - kappa * kappa * (1.0 - c * c)
    if disc < 0.0:
        raise TotalInternalReflection(f"Snell discriminant {disc:.3g} < 0")
    return kappa * X + (np.sqrt(disc) - kappa * c) * nu


def refracted_direction(jet, media):
    """Refracted unit direction ``Y = kappa X + b((grad rho, 0) - X(rho + x·grad rho))``.

    Returns ``(Y, coeffs)``.
    """
    kappa = media.kappa if isinstance(media, MediaPair) else float(media)
    c = scalar_coeffs(jet, kappa)
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    X = lift(x)
    Y = kappa * X + c.b * (np.append(p, 0.0) - X * (rho + x @ p))
    return Y, c


def grad_b(jet, media, coeffs=None):
    """Chart gradient of ``b``: ``alpha grad rho + beta D^2 rho (grad rho - (x·grad rho) x)``."""
    kappa = media.kappa if isinstance(media, MediaPair) else float(media)
    c = scalar_coeffs(jet, kappa) if coeffs is None else coeffs
    x, p, H = jet.x, jet.grad_rho, jet.hess_rho
    return c.alpha * p + c.beta * (H @ (p - (x @ p) * x))
