"""Cartesian ovals ``|M| + |M - P|/kappa = b`` and their refracting lower part.

For ``kappa < 1`` and ``|P| < b < |P|/kappa`` the lower branch is the radial
graph ``r = h(X, P, b)`` over the cap of directions

    X·P >= kappa^2 (b + sqrt((1/kappa^2 - 1)(|P|^2/kappa^2 - b^2)))

and every ray from the origin in such a direction is refracted into ``P``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapViolation, DomainError
from .refraction import RadialJet, refractor_normal, snell
from .sphere import chart, lift

CAP_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class OvalSpec:
    P: np.ndarray
    b: float
    kappa: float
    tau: Optional[float] = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).reshape(-1)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "b", float(self.b))
        if not 0.0 < self.kappa < 1.0:
            raise DomainError("refracting ovals are defined here for kappa < 1")
        nP = np.linalg.norm(P)
        if not nP < self.b < nP / self.kappa:
            raise DomainError(f"need |P| < b < |P|/kappa, got |P|={nP:.6g}, b={self.b:.6g}")
        if self.tau is not None and not 0.0 < self.tau < 1.0 - self.kappa:
            raise DomainError(f"tau must lie in (0, 1 - kappa), got {self.tau}")

    @property
    def cap_threshold(self):
        """Lower bound on ``X·P`` for directions refracted into ``P``."""
        return cap_threshold(self.P, self.b, self.kappa)

    def in_cap(self, X):
        return bool(np.dot(X, self.P) - self.cap_threshold >= CAP_SLACK * np.linalg.norm(self.P))


def cap_threshold(P, b, kappa):
    k = 1.0 / kappa ** 2 - 1.0
    c = float(np.dot(P, P)) / kappa ** 2 - b * b
    return kappa ** 2 * (b + np.sqrt(k * max(c, 0.0)))


def oval_radial_many(Xs, P, b, kappa):
    """Vectorised ``h(X, P, b)``; ``nan`` outside the refracting cap."""
    Xs = np.asarray(Xs, dtype=float)
    P = np.asarray(P, dtype=float)
    k = 1.0 / kappa ** 2 - 1.0
    c = float(P @ P) / kappa ** 2 - b * b
    s = Xs @ P / kappa ** 2 - b
    D = s * s - k * c
    thr = cap_threshold(P, b, kappa)
    ok = (Xs @ P - thr >= CAP_SLACK * np.linalg.norm(P)) & (D >= 0.0) & (s > 0.0)
    root = np.sqrt(np.where(ok, D, 0.0))
    # smaller root of k r^2 - 2 s r + c = 0, written without cancellation
    return np.where(ok, c / np.where(ok, s + root, 1.0), np.nan)


def oval_radial(X, oval):
    """Radius of the lower oval in direction ``X``; raises outside the cap."""
    X = np.asarray(X, dtype=float)
    if not oval.in_cap(X):
        raise CapViolation(f"direction outside the refracting cap (X·P = {X @ oval.P:.6g}, "
                           f"threshold {oval.cap_threshold:.6g})")
    r = float(oval_radial_many(X, oval.P, oval.b, oval.kappa))
    if not np.isfinite(r):
        raise CapViolation("oval discriminant is negative")
    return r


def oval_residual(r, X, oval):
    """Defining identity ``r + |r X - P|/kappa - b``."""
    return r + np.linalg.norm(r * np.asarray(X) - oval.P) / oval.kappa - oval.b


def oval_jet(x, oval):
    """Exact :class:`RadialJet` of ``x -> h(lift(x), P, b)``."""
    x = np.asarray(x, dtype=float)
    X = lift(x)
    h = oval_radial(X, oval)
    kap2 = oval.kappa ** 2
    k = 1.0 / kap2 - 1.0
    P = oval.P
    c = float(P @ P) / kap2 - oval.b ** 2
    s = X @ P / kap2 - oval.b
    sqD = np.sqrt(s * s - k * c)
    dh = -h / sqD
    d2h = c / sqD ** 3
    xn = X[-1]
    n = x.shape[0]
    grad_s = (P[:n] - P[-1] * x / xn) / kap2
    hess_s = -(P[-1] / kap2) * (np.eye(n) / xn + np.outer(x, x) / xn ** 3)
    grad = dh * grad_s
    hess = d2h * np.outer(grad_s, grad_s) + dh * hess_s
    return RadialJet(x, h, grad, 0.5 * (hess + hess.T))


def oval_refraction_check(X, oval, media=None, step=1e-6):
    """Angle between the refracted ray at the oval and the direction to ``P``.

    The chart gradient of ``h`` is taken by fourth-order central
    differences with chart step ``step``, so the check does not depend on
    :func:`oval_jet`.
    """
    X = np.asarray(X, dtype=float)
    if oval.tau is not None and X @ oval.P / np.linalg.norm(oval.P) < oval.kappa + oval.tau:
        raise CapViolation("direction violates the visibility margin X·P/|P| >= kappa + tau")
    r = oval_radial(X, oval)
    x = chart(X)
    n = x.shape[0]
    grad = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = step

        def h(k):
            return oval_radial(lift(x + k * e), oval)

        # fourth-order stencil: near the cap boundary the third derivative of h is large
        grad[j] = (8.0 * (h(1) - h(-1)) - (h(2) - h(-2))) / (12.0 * step)
    jet = RadialJet(x, r, grad, np.zeros((n, n)))
    kappa = oval.kappa if media is None else media.kappa
    Y = snell(X, refractor_normal(jet), kappa)
    d = oval.P - r * X
    d /= np.linalg.norm(d)
    return float(2.0 * np.arctan2(np.linalg.norm(Y - d), np.linalg.norm(Y + d)))
