"""Sign of the MTW quantity at the chart origin.

At ``x = 0`` the refractor equation reads ``det(D^2 rho + I + II) = RHS``
with, in the dummy variables ``v`` (for ``rho``) and ``p`` (for ``grad rho``),

    I  = (1/(b t)) (v Id - ((kappa^2-1)/v) p⊗p),
    II = ((kappa - b v)/b) Id - (2/v) p⊗p,

``b = (kappa^2-1)/(kappa v + q)``, ``q = sqrt(v^2 + (1-kappa^2)|p|^2)`` and
``t = t(v, p)`` the stretch of the ray leaving ``v e_{n+1}`` in direction
``Y(v, p)``. The quantity of interest is the second derivative

    H(xi, eta) = d^2/ds^2 [xi^T (I + II)(p + s eta) xi]   at s = 0

for orthogonal unit ``xi, eta``. Three evaluations are provided:
:func:`H_form` (closed form through the receiver's second fundamental form),
:func:`H_lm` (product-rule expansion through derivatives of ``1/t``) and
:func:`second_derivatives_of_I_II` (finite differences with re-traced ``t``).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError, HypothesisViolation, RefractorError
from .oracles import fd_directional_second
from .receiver import intersect_ray, rotated_graph_jet
from .refraction import MediaPair, RadialJet, refracted_direction
from .sphere import orthonormal_complement

ORTHO_TOL = 1e-12


def _kappa(media):
    return media.kappa if isinstance(media, MediaPair) else float(media)


def q_value(v, p, kappa):
    q2 = v * v + (1.0 - kappa ** 2) * float(np.dot(p, p))
    if not q2 > 0.0:
        raise DomainError(f"q^2 = {q2:.3g} <= 0 at the dummy point")
    return float(np.sqrt(q2))


def q_hessian(v, p, kappa):
    """``D_p^2 q`` with ``q = sqrt(v^2 + (1-kappa^2)|p|^2)``."""
    p = np.asarray(p, dtype=float)
    q = q_value(v, p, kappa)
    k = 1.0 - kappa ** 2
    return k / q * np.eye(p.shape[0]) - k * k / q ** 3 * np.outer(p, p)


def _dummy_state(v, p, surface, kappa):
    n = p.shape[0]
    jet = RadialJet(np.zeros(n), v, p, np.zeros((n, n)))
    Y, c = refracted_direction(jet, kappa)
    origin = np.zeros(n + 1)
    origin[-1] = v
    t, Z = intersect_ray(surface, origin, Y)
    return Y, c, t, Z


def stretch(v, p, surface, media):
    """``t(v, p)``: distance from ``v e_{n+1}`` to the receiver along ``Y(v, p)``."""
    return _dummy_state(float(v), np.asarray(p, float), surface, _kappa(media))[2]


@dataclass(frozen=True, eq=False)
class MTWPoint:
    """Dummy point ``(v, p)`` with its traced ray and the receiver data at the hit."""

    v: float
    p: np.ndarray
    kappa: float
    t: float
    q: float
    b: float
    Y: np.ndarray
    Z: np.ndarray
    grad_psi: np.ndarray
    hess_psi: np.ndarray
    hess_phi_hat: np.ndarray
    frame: np.ndarray
    surface: object = field(repr=False, default=None)

    @property
    def n(self):
        return self.p.shape[0]

    @property
    def grad_psi_dot_Y(self):
        return float(self.grad_psi @ self.Y)


def mtw_point(v, p, surface, media):
    """Trace the dummy ray and collect the receiver data at its hit point."""
    kappa = _kappa(media)
    v = float(v)
    p = np.asarray(p, dtype=float).reshape(-1)
    if not v > 0.0:
        raise DomainError("the dummy radius v must be positive")
    Y, c, t, Z = _dummy_state(v, p, surface, kappa)
    E = orthonormal_complement(Y)
    _, H_phi = rotated_graph_jet(surface, Z, Y, frame=E)
    g = np.asarray(surface.grad_psi(Z), float)
    if not g[-1] > 0.0:
        from .errors import HypothesisViolation
        raise HypothesisViolation("H2", f"psi^(n+1) = {g[-1]:.3g} <= 0 at the hit point")
    return MTWPoint(v, p, kappa, t, c.q, c.b, Y, Z, g, np.asarray(surface.hess_psi(Z), float),
                    H_phi, E, surface)


def I_II_matrices(point):
    """The matrices ``I`` and ``II`` at the dummy point."""
    v, p, kappa, b, t = point.v, point.p, point.kappa, point.b, point.t
    n = point.n
    pp = np.outer(p, p)
    I = (v * np.eye(n) - (kappa ** 2 - 1.0) / v * pp) / (b * t)
    II = (kappa - b * v) / b * np.eye(n) - 2.0 / v * pp
    return I, II


def _check_pair(xi, eta):
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if abs(xi @ eta) > ORTHO_TOL * max(1.0, np.linalg.norm(xi) * np.linalg.norm(eta)):
        raise DomainError(f"xi and eta must be orthogonal (xi·eta = {xi @ eta:.3g})")
    return xi, eta


def _c_factor(v, p, xi, kappa):
    return v * (xi @ xi) / (kappa ** 2 - 1.0) - (p @ xi) ** 2 / v


def _eta_q(point, eta):
    """``q_eta`` and ``q_eta_eta`` along ``eta``."""
    k = 1.0 - point.kappa ** 2
    pe = point.p @ eta
    q = point.q
    return k * pe / q, k / q * (eta @ eta - k * pe * pe / (q * q))


def projected_direction(point, eta):
    """``w = (kappa (p·eta)/q) X^0 - eta^0`` with ``^0`` the projection onto ``Y^perp``."""
    n = point.n
    X = np.zeros(n + 1)
    X[-1] = 1.0
    e = np.append(eta, 0.0)
    Y = point.Y
    w = point.kappa * (point.p @ eta) / point.q * X - e
    return w - (w @ Y) * Y


def H_form(point, xi, eta):
    """Closed form of ``H(xi, eta)`` through the receiver curvature along ``Y``.

    ``-c (1-kappa^2)^2/(kappa v + q) Hess(phi_hat)(w, w)
    + [kappa psi^{n+1} c/(t grad psi·Y) + kappa |xi|^2/(kappa^2-1)] eta^T D^2q eta``

    with ``c = v|xi|^2/(kappa^2-1) - (p·xi)^2/v``. ``Hess(phi_hat)`` is the
    Hessian of the receiver written as a graph over ``Y^perp`` in the
    direction ``Y`` (so the first term vanishes for planes).
    """
    xi, eta = _check_pair(xi, eta)
    kappa, v, p, q, t = point.kappa, point.v, point.p, point.q, point.t
    c = _c_factor(v, p, xi, kappa)
    _, q_ee = _eta_q(point, eta)
    u = point.frame.T @ projected_direction(point, eta)
    first = -c * (1.0 - kappa ** 2) ** 2 / (kappa * v + q) * (u @ point.hess_phi_hat @ u)
    second = (kappa * point.grad_psi[-1] * c / (t * point.grad_psi_dot_Y)
              + kappa * (xi @ xi) / (kappa ** 2 - 1.0)) * q_ee
    return float(first + second)


def inverse_stretch_derivatives(point, eta):
    """Closed forms of ``(1/t)'`` and ``(1/t)''`` along ``eta``."""
    kappa, v, q, t = point.kappa, point.v, point.q, point.t
    n = point.n
    e = np.zeros(n + 1)
    e[-1] = 1.0
    eta1 = np.append(eta, 0.0)
    Y = point.Y
    g = point.grad_psi
    gY = g @ Y
    q_e, q_ee = _eta_q(point, eta)
    g0 = kappa * v + q
    Y_e = (kappa * q_e * e + (kappa ** 2 - 1.0) * eta1 - Y * q_e) / g0
    Y_ee = (kappa * q_ee * e - 2.0 * Y_e * q_e - Y * q_ee) / g0
    t_e = -t * (g @ Y_e) / gY
    Z_e = t * Y_e + t_e * Y
    d1 = (g @ Y_e) / (t * gY)
    d2 = ((Z_e @ point.hess_psi @ Z_e) / t + g @ Y_ee) / (t * gY)
    return float(d1), float(d2)


def fd_inverse_stretch_derivatives(point, eta, h=None, richardson=True):
    """``(1/t)'`` and ``(1/t)''`` along ``eta`` by re-tracing ``t(v, p + s eta)``."""
    h = 1e-3 * point.v if h is None else h
    surface, kappa = point.surface, point.kappa

    def inv_t(pp):
        return 1.0 / _dummy_state(point.v, pp, surface, kappa)[2]

    p = point.p
    f = [inv_t(p + k * h * eta) for k in (-2, -1, 1, 2)]
    d1 = (8.0 * (f[2] - f[1]) - (f[3] - f[0])) / (12.0 * h)
    if richardson:
        hh = 0.5 * h
        g = [inv_t(p + k * hh * eta) for k in (-2, -1, 1, 2)]
        d1 = (16.0 * (8.0 * (g[2] - g[1]) - (g[3] - g[0])) / (12.0 * hh) - d1) / 15.0
    d2 = fd_directional_second(inv_t, p, eta, h=h, richardson=richardson)
    return float(d1), float(d2)


def H_lm(point, xi, eta, t_derivatives="closed"):
    """Product-rule expansion ``c [(kv+q)(1/t)'' + 2 q'(1/t)' + q''/t] + kappa|xi|^2 q''/(kappa^2-1)``.

    ``t_derivatives`` is ``"closed"`` (implicit differentiation of
    ``psi(v e + t Y) = 0``) or ``"fd"`` (re-traced central differences with
    Richardson extrapolation).
    """
    xi, eta = _check_pair(xi, eta)
    kappa, v, p, q, t = point.kappa, point.v, point.p, point.q, point.t
    c = _c_factor(v, p, xi, kappa)
    q_e, q_ee = _eta_q(point, eta)
    if t_derivatives == "closed":
        d1, d2 = inverse_stretch_derivatives(point, eta)
    elif t_derivatives == "fd":
        d1, d2 = fd_inverse_stretch_derivatives(point, eta)
    else:
        raise ValueError(f"unknown t_derivatives {t_derivatives!r}")
    return float(c * ((kappa * v + q) * d2 + 2.0 * q_e * d1 + q_ee / t)
                 + kappa * (xi @ xi) / (kappa ** 2 - 1.0) * q_ee)


def second_derivatives_of_I_II(point, xi, eta, h=None, richardson=True):
    """``d^2/ds^2 xi^T (I + II)(v, p + s eta) xi`` by finite differences, re-tracing ``t``."""
    xi, eta = _check_pair(xi, eta)
    h = 1e-3 * point.v if h is None else h
    surface, kappa, v = point.surface, point.kappa, point.v

    def quad(pp):
        Y, c, t, _ = _dummy_state(v, pp, surface, kappa)
        n = pp.shape[0]
        I = (v * np.eye(n) - (kappa ** 2 - 1.0) / v * np.outer(pp, pp)) / (c.b * t)
        II = (kappa - c.b * v) / c.b * np.eye(n) - 2.0 / v * np.outer(pp, pp)
        return xi @ (I + II) @ xi

    return float(fd_directional_second(quad, point.p, eta, h=h, richardson=richardson))


# ---------------------------------------------------------------- certification

NEGATIVE = "negative_definite"
INDEFINITE = "indefinite"
POSITIVE = "positive_definite_regime"


@dataclass(frozen=True)
class A3Sampling:
    """Ranges and counts for :func:`certify_A3`."""

    v_range: tuple = (0.5, 2.0)
    p_max: float = 0.5
    n_samples: int = 10_000
    seed: int = 0
    dual_route: bool = False

    def __post_init__(self):
        lo, hi = self.v_range
        if not 0.0 < lo <= hi:
            raise DomainError("v_range must satisfy 0 < v_min <= v_max")
        if not self.p_max >= 0.0:
            raise DomainError("p_max must be non-negative")
        if self.n_samples < 1:
            raise DomainError("n_samples must be at least 1")


@dataclass(frozen=True)
class MTWSample:
    v: float
    p: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    value: float
    value_lm: float = float("nan")
    value_fd: float = float("nan")


@dataclass(frozen=True)
class MTWReport:
    samples: list
    min_value: float
    max_value: float
    verdict: str
    c0: float
    witness: object
    max_dual_route_rel: float = float("nan")

    def rows(self):
        """``(v, |p|, p..., xi..., eta..., value)`` per sample."""
        return [(s.v, float(np.linalg.norm(s.p)), *s.p, *s.xi, *s.eta, s.value) for s in self.samples]


def stratified_samples(n, sampling):
    """Latin hypercube draws of ``(v, p, xi, eta)`` with ``eta`` uniform in ``xi^perp``.

    Directions use inverse-normal transforms of the stratified coordinates;
    ``|p|`` is drawn so that ``p`` is uniform in the ball of radius ``p_max``.
    """
    d = 2 + 3 * n
    u = qmc.LatinHypercube(d=d, seed=np.random.default_rng(sampling.seed)).random(sampling.n_samples)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    lo, hi = sampling.v_range
    v = lo + (hi - lo) * u[:, 0]
    r = sampling.p_max * u[:, 1] ** (1.0 / n)
    G = ndtri(u[:, 2:])
    dp, dxi, deta = G[:, :n], G[:, n:2 * n], G[:, 2 * n:]
    p = r[:, None] * dp / np.linalg.norm(dp, axis=1, keepdims=True)
    xi = dxi / np.linalg.norm(dxi, axis=1, keepdims=True)
    deta = deta - np.sum(deta * xi, axis=1, keepdims=True) * xi
    eta = deta / np.linalg.norm(deta, axis=1, keepdims=True)
    # one Gram-Schmidt pass leaves xi·eta at rounding level; repeat once
    eta = eta - np.sum(eta * xi, axis=1, keepdims=True) * xi
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    return v, p, xi, eta


def _at_sample(exc, where):
    if isinstance(exc, HypothesisViolation):
        out = HypothesisViolation(exc.code, f"{where}: {exc}")
    else:
        out = type(exc)(f"{where}: {exc}")
    return out


def certify_A3(surface, media, sampling=None, margin=0.1):
    """Evaluate ``H(xi, eta)`` over stratified samples and classify its sign.

    The verdict is ``negative_definite`` when every value is negative,
    ``positive_definite_regime`` when every value is positive and
    ``indefinite`` otherwise. ``c0`` is the smallest absolute value reduced
    by ``margin`` (zero when indefinite); ``witness`` is the sample closest
    to violating the verdict, or a sample of the minority sign.
    """
    sampling = A3Sampling() if sampling is None else sampling
    n = surface.n
    v, p, xi, eta = stratified_samples(n, sampling)
    samples = []
    worst_dual = 0.0
    for k in range(sampling.n_samples):
        try:
            pt = mtw_point(v[k], p[k], surface, media)
        except RefractorError as exc:
            raise _at_sample(exc, f"sample {k} (v = {v[k]:.6g}, p = {p[k].tolist()})") from exc
        h = H_form(pt, xi[k], eta[k])
        if sampling.dual_route:
            h_lm = H_lm(pt, xi[k], eta[k], t_derivatives="fd")
            h_fd = second_derivatives_of_I_II(pt, xi[k], eta[k])
            scale = max(abs(h), 1e-300)
            worst_dual = max(worst_dual, abs(h_lm - h) / scale, abs(h_fd - h) / scale)
            samples.append(MTWSample(float(v[k]), p[k], xi[k], eta[k], h, h_lm, h_fd))
        else:
            samples.append(MTWSample(float(v[k]), p[k], xi[k], eta[k], h))
    values = np.array([s.value for s in samples])
    vmin, vmax = float(values.min()), float(values.max())
    if vmax < 0.0:
        verdict, c0, witness = NEGATIVE, (1.0 - margin) * (-vmax), samples[int(values.argmax())]
    elif vmin > 0.0:
        verdict, c0, witness = POSITIVE, (1.0 - margin) * vmin, samples[int(values.argmin())]
    else:
        neg = int(np.sum(values < 0.0))
        minority = values > 0.0 if neg >= values.size - neg else values < 0.0
        verdict, c0, witness = INDEFINITE, 0.0, samples[int(np.flatnonzero(minority)[0])]
    return MTWReport(samples, vmin, vmax, verdict, float(c0), witness,
                     float(worst_dual) if sampling.dual_route else float("nan"))
