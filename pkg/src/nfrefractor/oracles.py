"""Independent verification oracles.

Everything here is built from values only: :func:`~nfrefractor.sphere.lift`,
the value of the refracted direction, :func:`~nfrefractor.receiver.intersect_ray`
and dense linear algebra. No closed-form derivative from
:mod:`nfrefractor.jacobian` or :mod:`nfrefractor.mtw` is called, so the
oracles can adjudicate those formulas.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .ovals import OvalSpec, oval_jet, oval_radial
from .receiver import intersect_ray
from .refraction import MediaPair, RadialJet, refracted_direction
from .sphere import lift

SCHEMES = ("central_2nd_order", "central_4th_order")


@dataclass(frozen=True)
class FDSpec:
    """Step and stencil of a finite-difference oracle."""

    step: float = 1e-5
    scheme: str = "central_2nd_order"
    richardson: bool = False

    def __post_init__(self):
        if not 1e-8 <= self.step <= 1e-2:
            raise DomainError(f"FD step must lie in [1e-8, 1e-2], got {self.step}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown FD scheme {self.scheme!r}")

    @property
    def order(self):
        return 2 if self.scheme == "central_2nd_order" else 4


def _directional(fn, x, e, h, order):
    if order == 2:
        return (np.asarray(fn(x + h * e)) - np.asarray(fn(x - h * e))) / (2.0 * h)
    f1 = np.asarray(fn(x + h * e)) - np.asarray(fn(x - h * e))
    f2 = np.asarray(fn(x + 2 * h * e)) - np.asarray(fn(x - 2 * h * e))
    return (8.0 * f1 - f2) / (12.0 * h)


def _derivative(fn, x, e, spec):
    d = _directional(fn, x, e, spec.step, spec.order)
    if not spec.richardson:
        return d
    d_half = _directional(fn, x, e, 0.5 * spec.step, spec.order)
    w = 2.0 ** spec.order
    return (w * d_half - d) / (w - 1.0)


def fd_gradient(fn, x, spec=None):
    """Central-difference gradient of a scalar field ``fn`` at ``x``."""
    spec = FDSpec() if spec is None else spec
    x = np.asarray(x, dtype=float)
    eye = np.eye(x.shape[0])
    return np.array([float(_derivative(fn, x, eye[j], spec)) for j in range(x.shape[0])])


def fd_jacobian(fn, x, spec=None):
    """Central-difference Jacobian ``(d fn_i / d x_j)`` of a vector field."""
    spec = FDSpec() if spec is None else spec
    x = np.asarray(x, dtype=float)
    eye = np.eye(x.shape[0])
    cols = [np.asarray(_derivative(fn, x, eye[j], spec), dtype=float) for j in range(x.shape[0])]
    return np.stack(cols, axis=-1)


def fd_directional_second(fn, x, eta, h=1e-4, richardson=False):
    """``d^2/ds^2 fn(x + s eta)`` at ``s = 0`` by the 5-point stencil."""
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)

    def d2(hh):
        f = [np.asarray(fn(x + k * hh * eta), dtype=float) for k in (-2, -1, 0, 1, 2)]
        return (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12.0 * hh * hh)

    if not richardson:
        return d2(h)
    return (16.0 * d2(0.5 * h) - d2(h)) / 15.0


# ---------------------------------------------------------------- fixtures

ANALYTIC_KINDS = ("constant", "radial_quadratic", "taylor_quadratic", "direction_quadratic",
                  "oval_exact", "oval_perturbed")


@dataclass(frozen=True, eq=False)
class AnalyticRho:
    """Radial functions with exact chart derivatives, used as test fixtures.

    ``kind`` selects the family and ``params`` its parameters:

    constant
        ``c``.
    radial_quadratic
        ``c + a |x|^2``.
    taylor_quadratic
        ``c + g·x + x^T S x / 2`` in the chart.
    direction_quadratic
        ``c + g·X + X^T S X / 2`` as a function of the direction ``X``;
        the family is closed under rotations of space.
    oval_exact
        the lower oval ``h(X, P, b)`` for ``kappa``.
    oval_perturbed
        ``h(X, P, b) + eps |x|^2``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ANALYTIC_KINDS:
            raise DomainError(f"unknown AnalyticRho kind {self.kind!r}")
        if self.kind.startswith("oval"):
            p = self.params
            object.__setattr__(self, "_oval", OvalSpec(np.asarray(p["P"], float), p["b"], p["kappa"]))

    # constructors
    @classmethod
    def constant(cls, c):
        return cls("constant", {"c": float(c)})

    @classmethod
    def radial_quadratic(cls, c, a):
        return cls("radial_quadratic", {"c": float(c), "a": float(a)})

    @classmethod
    def taylor_quadratic(cls, c, g, S):
        S = np.asarray(S, float)
        return cls("taylor_quadratic", {"c": float(c), "g": np.asarray(g, float), "S": 0.5 * (S + S.T)})

    @classmethod
    def direction_quadratic(cls, c, g, S):
        S = np.asarray(S, float)
        return cls("direction_quadratic", {"c": float(c), "g": np.asarray(g, float), "S": 0.5 * (S + S.T)})

    @classmethod
    def oval(cls, P, b, kappa, eps=0.0):
        kind = "oval_exact" if eps == 0.0 else "oval_perturbed"
        return cls(kind, {"P": np.asarray(P, float), "b": float(b), "kappa": float(kappa), "eps": float(eps)})

    def rotated(self, R):
        """The fixture ``X -> rho(R^T X)`` (only for direction-defined kinds)."""
        R = np.asarray(R, float)
        p = self.params
        if self.kind == "direction_quadratic":
            return AnalyticRho.direction_quadratic(p["c"], R @ p["g"], R @ p["S"] @ R.T)
        if self.kind == "constant":
            return self
        if self.kind == "oval_exact":
            return AnalyticRho.oval(R @ p["P"], p["b"], p["kappa"])
        raise DomainError(f"kind {self.kind!r} is not defined on directions")

    # evaluators
    def value(self, x):
        return self.jet(x, order=0)[0]

    def grad(self, x):
        return self.jet(x, order=1)[1]

    def hess(self, x):
        return self.jet(x, order=2)[2]

    def radial_jet(self, x):
        r, g, H = self.jet(x)
        return RadialJet(np.asarray(x, float), r, g, H)

    def jet(self, x, order=2):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        p = self.params
        k = self.kind
        if k == "constant":
            return p["c"], np.zeros(n), np.zeros((n, n))
        if k == "radial_quadratic":
            return p["c"] + p["a"] * (x @ x), 2 * p["a"] * x, 2 * p["a"] * np.eye(n)
        if k == "taylor_quadratic":
            g, S = p["g"], p["S"]
            return p["c"] + g @ x + 0.5 * x @ S @ x, g + S @ x, S.copy()
        if k == "direction_quadratic":
            X = lift(x)
            g, S = p["g"], p["S"]
            xn = X[-1]
            DX = np.vstack([np.eye(n), -x[None, :] / xn])
            df = g + S @ X
            hess_xn = -(np.eye(n) / xn + np.outer(x, x) / xn ** 3)
            return (p["c"] + g @ X + 0.5 * X @ S @ X, DX.T @ df,
                    DX.T @ S @ DX + df[-1] * hess_xn)
        # ovals
        if order == 0:
            r = oval_radial(lift(x), self._oval)
            extra = p["eps"] * (x @ x)
            return r + extra, None, None
        j = oval_jet(x, self._oval)
        eps = p["eps"]
        return j.rho + eps * (x @ x), j.grad_rho + 2 * eps * x, j.hess_rho + 2 * eps * np.eye(n)

    def self_test(self, x, step=1e-5):
        """Max deviations of the gradient and Hessian from central differences."""
        spec = FDSpec(step=step, scheme="central_4th_order")
        g_err = np.max(np.abs(fd_gradient(self.value, x, spec) - self.grad(x)))
        H_err = np.max(np.abs(fd_jacobian(self.grad, x, spec) - self.hess(x)))
        return float(g_err), float(H_err)


# ---------------------------------------------------------------- traced values

def _kappa(media):
    return media.kappa if isinstance(media, MediaPair) else float(media)


def traced_values(rho_fn, surface, media, x):
    """Values ``(Y, b, t, Z)`` at ``x`` for the analytic radial function ``rho_fn``.

    Uses only the value of the refracted direction and the ray intersection.
    """
    x = np.asarray(x, dtype=float)
    r, g, _ = rho_fn.jet(x, order=1)
    n = x.shape[0]
    jet = RadialJet(x, r, g, np.zeros((n, n)))
    Y, c = refracted_direction(jet, media)
    t, Z = intersect_ray(surface, r * lift(x), Y, check_visibility=False)
    return Y, c.b, t, Z


def fd_grad_b(rho_fn, media, x, spec=None):
    def b_of(xx):
        r, g, _ = rho_fn.jet(xx, order=1)
        return refracted_direction(RadialJet(xx, r, g, np.zeros((len(xx), len(xx)))), media)[1].b

    return fd_gradient(b_of, x, spec)


def fd_Dy(rho_fn, media, x, spec=None):
    def y_of(xx):
        r, g, _ = rho_fn.jet(xx, order=1)
        Y, _ = refracted_direction(RadialJet(xx, r, g, np.zeros((len(xx), len(xx)))), media)
        return Y[:-1]

    return fd_jacobian(y_of, x, spec)


def fd_grad_t(rho_fn, surface, media, x, spec=None):
    return fd_gradient(lambda xx: traced_values(rho_fn, surface, media, xx)[2], x, spec)


def fd_Dz(rho_fn, surface, media, x, spec=None):
    return fd_jacobian(lambda xx: traced_values(rho_fn, surface, media, xx)[3][:-1], x, spec)


def dense_det(A):
    return float(np.linalg.det(np.asarray(A, dtype=float)))


def dense_inverse(A):
    return np.linalg.inv(np.asarray(A, dtype=float))


def rel_frobenius(A, B):
    """``|A - B|_F / max(1, |B|_F)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return float(np.linalg.norm(A - B) / max(1.0, np.linalg.norm(B)))


# ---------------------------------------------------------------- rotations

@dataclass(frozen=True)
class RotationReport:
    quantities: dict
    max_rel_discrepancy: float


def _invariants(rho_fn, surface, media, x, f_val, g_val):
    from .jacobian import build_bundle, build_Dz, ma_residual

    jet = rho_fn.radial_jet(x)
    bundle = build_bundle(jet, surface, media)
    Dz, _ = build_Dz(bundle)
    g = bundle.ray.grad_psi
    magnification = abs(np.linalg.det(Dz)) * np.linalg.norm(g) * bundle.ray.X[-1] / g[-1]
    res = ma_residual(jet, surface, media, f_val, g_val, bundle=bundle)
    return {"t": bundle.t, "magnification": float(magnification),
            "relative_residual": res.relative, "y_dot_x": float(bundle.Y @ bundle.ray.X)}


def rotation_harness(rho_fn, surface, media, x, R, f_val=1.0, g_val=1.0, mtw_point=None):
    """Compare chart-free scalars before and after rotating the whole scene by ``R``.

    ``rho_fn`` must be defined on directions (see :meth:`AnalyticRho.rotated`).
    The base point ``x`` is carried to the chart point of ``R X``. When
    ``mtw_point = (v, p, xi, eta)`` is given and ``R`` fixes ``e_{n+1}``, the
    MTW quantity at the origin is compared as well.
    """
    R = np.asarray(R, dtype=float)
    X = lift(np.asarray(x, float))
    RX = R @ X
    if not RX[-1] > 0.0:
        raise DomainError("rotation moves the base direction out of the upper hemisphere")
    before = _invariants(rho_fn, surface, media, x, f_val, g_val)
    after = _invariants(rho_fn.rotated(R), surface.rotated(R), media, RX[:-1], f_val, g_val)
    quantities = {}
    for key in before:
        a, b = before[key], after[key]
        quantities[key] = (a, b, abs(a - b) / max(abs(a), 1e-300) if key != "relative_residual"
                           else abs(a - b) / max(1.0, abs(a)))
    if mtw_point is not None:
        if abs(R[-1, -1] - 1.0) > 1e-12:
            raise DomainError("the MTW comparison needs a rotation fixing e_(n+1)")
        from .mtw import H_form, mtw_point as make_point
        v, p, xi, eta = (np.asarray(u, float) if np.ndim(u) else float(u) for u in mtw_point)
        Rn = R[:-1, :-1]
        h0 = H_form(make_point(v, p, surface, media), xi, eta)
        h1 = H_form(make_point(v, Rn @ p, surface.rotated(R), media), Rn @ xi, Rn @ eta)
        quantities["H_form"] = (h0, h1, abs(h0 - h1) / max(abs(h0), 1e-300))
    worst = max(v[2] for v in quantities.values())
    return RotationReport(quantities, float(worst))
