"""Jacobian of the imaging map and the Monge-Ampere operator of the refractor.

For a refractor ``rho`` over the chart, a receiver ``psi = 0`` and media
ratio ``kappa`` this module assembles

* ``mu0, mu1, mu2`` with ``Dz = mu1 + t mu2 Dy = mu2 (mu0 + t Dy)``,
* the stretch gradient ``grad t`` and the Jacobian ``Dy`` of the refracted
  direction,
* ``M`` (the coefficient of ``D^2 rho`` in ``Dy``), its determinant and inverse,
* the lower order matrices ``A = b M^{-1} mu0`` and ``B``,

and evaluates the pointwise residual of

    det(M) det(D^2 rho + A/(b t) + B/b) = (f/g) (y_{n+1}/x_{n+1}) (grad psi·Y/|grad psi|) t^{-n}.
"""

from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolation, SingularMatrixError
from .receiver import intersect_ray
from .refraction import MediaPair, grad_b, refracted_direction, scalar_coeffs

M_INVERTIBILITY_TOL = 1e-10


def _kappa(media):
    return media.kappa if isinstance(media, MediaPair) else float(media)


@dataclass(frozen=True, eq=False)
class TracedRay:
    X: np.ndarray
    Y: np.ndarray
    t: float
    Z: np.ndarray
    coeffs: object
    grad_psi: np.ndarray


def trace(jet, surface, media, t_max=None):
    """Refract the ray through ``jet`` and intersect it with the receiver.

    Checks H1 (``y_{n+1} > 0``), H2 (``psi^{n+1} > 0``) and H3 (``grad psi·Y > 0``).
    """
    Y, coeffs = refracted_direction(jet, media)
    if not Y[-1] > 0.0:
        raise HypothesisViolation("H1", f"y_(n+1) = {Y[-1]:.3g} <= 0")
    X = jet.X
    t, Z = intersect_ray(surface, jet.rho * X, Y, t_max=t_max)
    g = np.asarray(surface.grad_psi(Z), dtype=float)
    if not g[-1] > 0.0:
        raise HypothesisViolation("H2", f"psi^(n+1) = {g[-1]:.3g} <= 0 at Z")
    return TracedRay(X, Y, t, Z, coeffs, g)


def det_mu2_closed(ray):
    """``det mu2 = psi^{n+1} / (y_{n+1} (grad psi·Y))``."""
    return ray.grad_psi[-1] / (ray.Y[-1] * (ray.grad_psi @ ray.Y))


def build_mu(jet, surface, media, ray=None):
    """The matrices ``(mu0, mu1, mu2)`` at the traced point of ``jet``.

    ``mu0 = mu2^{-1} mu1`` is built from its closed form
    ``rho Id + (x - kappa y) ⊗ grad rho``, which carries no ``D^2 rho``; it
    relies on ``y_{n+1} = sigma x_{n+1}``.
    """
    ray = trace(jet, surface, media) if ray is None else ray
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    n = jet.n
    X, Y, g = ray.X, ray.Y, ray.grad_psi
    y, yn = Y[:n], Y[-1]
    gh, gn = g[:n], g[-1]
    gY = g @ Y
    gX = g @ X
    I = np.eye(n)
    mu1 = rho * I + np.outer(x, p) - (
        rho * np.outer(y, gh) - rho * gn / X[-1] * np.outer(y, x) + gX * np.outer(y, p)) / gY
    mu2 = I - np.outer(y, gh - gn / yn * y) / gY
    mu0 = rho * I + np.outer(x - _kappa(media) * y, p)
    return mu0, mu1, mu2


def build_Dy(jet, media, coeffs=None):
    """Chart Jacobian of the first ``n`` components of ``Y``.

    ``Dy = sigma Id + [alpha(p - s x) - 2b x] ⊗ p + M D^2 rho`` with
    ``s = rho + x·p`` and ``sigma = kappa - b s``.
    """
    c = scalar_coeffs(jet, _kappa(media)) if coeffs is None else coeffs
    x, rho, p, H = jet.x, jet.rho, jet.grad_rho, jet.hess_rho
    s = rho + x @ p
    M, _, _ = build_M(jet, media, c, invert=False)
    return c.sigma * np.eye(jet.n) + np.outer(c.alpha * (p - s * x) - 2.0 * c.b * x, p) + M @ H


def build_M(jet, media, coeffs=None, invert=True):
    """``M = b(Id - x⊗x) + beta (p - (rho + x·p) x) ⊗ (p - (x·p) x)``.

    Returns ``(M, det_M, M_inv)`` with the closed-form determinant
    ``(1 + (b/q)(|p|^2 - (x·p)(rho + x·p))) b^n x_{n+1}^2`` and inverse
    ``(1/b)(Id + x⊗x/x_{n+1}^2 - Q (p - rho x/x_{n+1}^2) ⊗ p)``.
    """
    c = scalar_coeffs(jet, _kappa(media)) if coeffs is None else coeffs
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    n = jet.n
    xp = x @ p
    xn2 = 1.0 - x @ x
    I = np.eye(n)
    M = c.b * (I - np.outer(x, x)) + c.beta * np.outer(p - (rho + xp) * x, p - xp * x)
    factor = 1.0 + c.b / c.q * (p @ p - xp * (rho + xp))
    det_M = factor * c.b ** n * xn2
    if not invert:
        return M, det_M, None
    if abs(factor) <= M_INVERTIBILITY_TOL:
        raise SingularMatrixError(f"M is singular: rank-one factor {factor:.3g}")
    M_inv = (I + np.outer(x, x) / xn2 - c.Q * np.outer(p - rho * x / xn2, p)) / c.b
    return M, det_M, M_inv


def lower_order_matrix(jet, coeffs):
    """The ``D^2 rho``-free part of ``Dy``: ``sigma Id + [alpha(p - s x) - 2b x] ⊗ p``."""
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    c = coeffs
    s = rho + x @ p
    return c.sigma * np.eye(jet.n) + np.outer(c.alpha * (p - s * x) - 2.0 * c.b * x, p)


def AB_definition(jet, coeffs, M_inv, mu0):
    """``A = b M^{-1} mu0`` and ``B = b M^{-1} (lower order part of Dy)``."""
    b = coeffs.b
    return b * M_inv @ mu0, b * M_inv @ lower_order_matrix(jet, coeffs)


def AB_simplified(jet, media, coeffs):
    """Closed forms of ``A`` and ``B`` in the basis ``x, grad rho``.

    ``A = rho (Id + x⊗x/x_{n+1}^2) - ((kappa^2-1)/rho) p⊗p`` and
    ``B = sigma (Id + x⊗x/x_{n+1}^2) + ((Q rho F - alpha rho - 2b)/x_{n+1}^2) x⊗p + (alpha - Q F) p⊗p``.
    """
    kappa = _kappa(media)
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    c = coeffs
    xn2 = 1.0 - x @ x
    P_x = np.eye(jet.n) + np.outer(x, x) / xn2
    A = rho * P_x - (kappa ** 2 - 1.0) / rho * np.outer(p, p)
    B = (c.sigma * P_x + (c.Q * rho * c.F - c.alpha * rho - 2.0 * c.b) / xn2 * np.outer(x, p)
         + (c.alpha - c.Q * c.F) * np.outer(p, p))
    return A, B


def AB_at_origin(rho, p, media, b):
    """Values of ``A`` and ``B`` at ``x = 0``."""
    kappa = _kappa(media)
    n = p.shape[0]
    A = rho * np.eye(n) - (kappa ** 2 - 1.0) / rho * np.outer(p, p)
    B = (kappa - b * rho) * np.eye(n) - 2.0 * b / rho * np.outer(p, p)
    return A, B


def grad_stretch(jet, surface, Dy, ray):
    """Closed-form chart gradient of the stretch ``t`` at the traced ``ray``."""
    if not ray.grad_psi @ ray.Y > 0.0:
        raise HypothesisViolation("H3", "grad psi · Y <= 0")
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    n = jet.n
    X, Y, g, t = ray.X, ray.Y, ray.grad_psi, ray.t
    gh, gn = g[:n], g[-1]
    gY = g @ Y
    return -(rho * gh - rho * gn / X[-1] * x + (g @ X) * p + t * Dy.T @ (gh - gn / Y[-1] * Y[:n])) / gY


@dataclass(frozen=True, eq=False)
class JacobianBundle:
    jet: object
    ray: TracedRay
    coeffs: object
    mu0: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    grad_b: np.ndarray
    Dy: np.ndarray
    grad_t: np.ndarray
    M: np.ndarray
    det_M: float
    M_inv: np.ndarray
    A_mat: np.ndarray
    B_mat: np.ndarray

    @property
    def t(self):
        return self.ray.t

    @property
    def Y(self):
        return self.ray.Y

    @property
    def Z(self):
        return self.ray.Z

    @property
    def W(self):
        """``D^2 rho + A/(b t) + B/b``."""
        b = self.coeffs.b
        return self.jet.hess_rho + self.A_mat / (b * self.t) + self.B_mat / b


def build_bundle(jet, surface, media, ray=None):
    """Trace the ray at ``jet`` and assemble every matrix of the bundle."""
    ray = trace(jet, surface, media) if ray is None else ray
    c = ray.coeffs
    mu0, mu1, mu2 = build_mu(jet, surface, media, ray)
    Dy = build_Dy(jet, media, c)
    M, det_M, M_inv = build_M(jet, media, c)
    A, B = AB_simplified(jet, media, c)
    return JacobianBundle(jet, ray, c, mu0, mu1, mu2, grad_b(jet, media, c), Dy,
                          grad_stretch(jet, surface, Dy, ray), M, det_M, M_inv, A, B)


def build_AB(jet, surface, media, bundle, route="simplified"):
    """``(A, B)`` by the closed forms (``route="simplified"``) or from their definitions."""
    if route == "simplified":
        return AB_simplified(jet, media, bundle.coeffs)
    if route == "definition":
        return AB_definition(jet, bundle.coeffs, bundle.M_inv, bundle.mu0)
    raise ValueError(f"unknown route {route!r}")


def A_x_grad_coefficient(jet, media, A):
    """Component of ``A`` along ``x ⊗ grad rho`` once ``rho(Id + x⊗x/x_{n+1}^2)`` and the
    ``p⊗p`` term are removed (Frobenius projection); it vanishes identically."""
    kappa = _kappa(media)
    x, rho, p = jet.x, jet.rho, jet.grad_rho
    xn2 = 1.0 - x @ x
    known = rho * (np.eye(jet.n) + np.outer(x, x) / xn2) - (kappa ** 2 - 1.0) / rho * np.outer(p, p)
    E = np.outer(x, p)
    nE = np.sum(E * E)
    if nE == 0.0:
        return 0.0
    return float(np.sum((A - known) * E) / nE)


def build_Dz(bundle):
    """``Dz = mu2 (mu0 + t Dy)`` and the factored determinant.

    ``det Dz = det(mu2) t^n det(M) det(D^2 rho + A/(b t) + B/b)``.
    """
    Dz = bundle.mu2 @ (bundle.mu0 + bundle.t * bundle.Dy)
    n = bundle.jet.n
    det_Dz = det_mu2_closed(bundle.ray) * bundle.t ** n * bundle.det_M * np.linalg.det(bundle.W)
    return Dz, det_Dz


def Dz_routes(bundle):
    """The three assemblies of ``Dz`` used for cross-checking."""
    jet, t = bundle.jet, bundle.t
    y = bundle.Y[:jet.n]
    direct = (jet.rho * np.eye(jet.n) + np.outer(jet.x, jet.grad_rho)
              + np.outer(y, bundle.grad_t) + t * bundle.Dy)
    return {
        "direct": direct,
        "mu1": bundle.mu1 + t * bundle.mu2 @ bundle.Dy,
        "mu0": bundle.mu2 @ (bundle.mu0 + t * bundle.Dy),
    }


@dataclass(frozen=True)
class MAResidual:
    raw: float
    relative: float
    lhs: float
    rhs: float
    det_M: float
    det_W: float
    det_Dz: float
    t: float
    psd_branch: bool


def ma_rhs(bundle, f_val, g_val):
    g = bundle.ray.grad_psi
    n = bundle.jet.n
    return (f_val / g_val * bundle.Y[-1] / bundle.ray.X[-1]
            * (g @ bundle.Y) / np.linalg.norm(g) * bundle.t ** (-n))


def ma_residual(jet, surface, media, f_val, g_val, bundle=None):
    """Residual ``|det M det W| - RHS`` of the Monge-Ampere equation at ``jet``.

    ``W = D^2 rho + A/(bt) + B/b``. The absolute value mirrors ``|det Dz|``
    in the energy balance; ``psd_branch`` reports whether ``W`` is positive
    semidefinite (the branch selected by ovals supporting from below).
    """
    if not (f_val > 0 and g_val > 0):
        raise ValueError("densities f and g must be positive")
    bundle = build_bundle(jet, surface, media) if bundle is None else bundle
    W = bundle.W
    det_W = float(np.linalg.det(W))
    lhs = abs(bundle.det_M * det_W)
    rhs = float(ma_rhs(bundle, f_val, g_val))
    _, det_Dz = build_Dz(bundle)
    psd = bool(np.min(np.linalg.eigvalsh(0.5 * (W + W.T))) >= -1e-12 * max(1.0, np.abs(W).max()))
    return MAResidual(lhs - rhs, (lhs - rhs) / rhs, lhs, rhs, float(bundle.det_M), det_W,
                      float(det_Dz), bundle.t, psd)


def ma_residual_at_origin(jet, surface, media, f_val, g_val):
    """The same residual through the ``x = 0`` closed forms.

    Uses ``A(0) = rho Id - ((kappa^2-1)/rho) p⊗p``,
    ``B(0) = (kappa - b rho) Id - (2b/rho) p⊗p`` and
    ``det M(0) = (1 + (b/q)|p|^2) b^n``.
    """
    if np.any(jet.x != 0.0):
        raise ValueError("ma_residual_at_origin needs a jet at x = 0")
    ray = trace(jet, surface, media)
    c = ray.coeffs
    kappa = _kappa(media)
    rho, p, n = jet.rho, jet.grad_rho, jet.n
    t = ray.t
    W = (jet.hess_rho + (rho * np.eye(n) - (kappa ** 2 - 1.0) / rho * np.outer(p, p)) / (c.b * t)
         + (kappa - c.b * rho) / c.b * np.eye(n) - 2.0 / rho * np.outer(p, p))
    det_M = (1.0 + c.b / c.q * (p @ p)) * c.b ** n
    g = ray.grad_psi
    det_W = float(np.linalg.det(W))
    lhs = abs(det_M * det_W)
    rhs = f_val / g_val * (g @ ray.Y) / np.linalg.norm(g) * t ** (-n) * ray.Y[-1]
    psd = bool(np.min(np.linalg.eigvalsh(W)) >= -1e-12 * max(1.0, np.abs(W).max()))
    return MAResidual(lhs - rhs, (lhs - rhs) / rhs, lhs, float(rhs), float(det_M), det_W,
                      float(det_mu2_closed(ray) * t ** n * det_M * det_W), t, psd)


def pushforward_density(bundle, f_val):
    """Target density ``g`` for which the energy balance holds exactly at this point."""
    Dz, _ = build_Dz(bundle)
    g = bundle.ray.grad_psi
    return f_val * g[-1] / (np.linalg.norm(g) * bundle.ray.X[-1] * abs(np.linalg.det(Dz)))
