"""Batch comparisons of closed forms against independent oracles.

Each battery draws random admissible inputs from a seeded generator and
returns one :class:`BatteryRow` per formula with the worst absolute and
relative discrepancy seen. The ``verify`` command of the CLI and the
acceptance tests both run these functions.
"""

from dataclasses import dataclass

import numpy as np

from . import jacobian as J
from .errors import RefractorError
from .oracles import (AnalyticRho, FDSpec, dense_det, fd_Dy, fd_Dz, fd_grad_b, fd_grad_t,
                      rel_frobenius)
from .ovals import OvalSpec, oval_jet, oval_refraction_check
from .receiver import plane, quadratic_graph, tilted_plane
from .refraction import MediaPair, RadialJet
from .sphere import unit


@dataclass(frozen=True)
class BatteryRow:
    """Worst-case comparison of one formula against its oracle.

    ``measure`` is ``"abs"`` or ``"rel"`` and says which of the two errors
    is compared with ``tol``.
    """

    formula: str
    max_abs: float
    max_rel: float
    tol: float
    measure: str
    samples: int

    @property
    def passed(self):
        err = self.max_abs if self.measure == "abs" else self.max_rel
        return bool(np.isfinite(err) and err <= self.tol and self.samples > 0)


@dataclass(frozen=True)
class BatteryTolerances:
    fd_first: float = 1e-6
    fd_second: float = 1e-5
    algebraic: float = 1e-9
    origin: float = 1e-9
    focusing: float = 1e-7
    oval_Dz: float = 1e-7

    def __post_init__(self):
        for name, val in vars(self).items():
            if not val > 0.0:
                raise ValueError(f"tolerance {name} must be positive")


class _Worst:
    def __init__(self):
        self.abs, self.rel, self.count = {}, {}, {}

    def add(self, key, abs_err, rel_err):
        self.abs[key] = max(self.abs.get(key, 0.0), float(abs_err))
        self.rel[key] = max(self.rel.get(key, 0.0), float(rel_err))
        self.count[key] = self.count.get(key, 0) + 1

    def row(self, key, tol, measure):
        return BatteryRow(key, self.abs.get(key, np.nan), self.rel.get(key, np.nan), tol, measure,
                          self.count.get(key, 0))


def _matrix_errors(A, B):
    A, B = np.asarray(A, float), np.asarray(B, float)
    return float(np.abs(A - B).max()), rel_frobenius(A, B)


def _scalar_errors(a, b):
    return abs(a - b), abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------- random inputs

RECEIVERS = ("plane", "tilted_plane", "concave_quadratic")


def _receiver(name, height=3.0):
    if name == "plane":
        return plane(height)
    if name == "tilted_plane":
        return tilted_plane([0.1, -0.2], height)
    return quadratic_graph(height, 0.05)


def random_fixture(rng, x_max=0.3, n=2):
    """A Taylor-quadratic radial function and a chart point with ``|x| <= x_max``."""
    r = x_max * np.sqrt(rng.uniform())
    a = rng.uniform(0.0, 2.0 * np.pi)
    x = r * np.array([np.cos(a), np.sin(a)]) if n == 2 else unit(rng.normal(size=n)) * r
    S = 0.3 * rng.normal(size=(n, n))
    rho = AnalyticRho.taylor_quadratic(1.0 + 0.5 * rng.uniform(), 0.2 * rng.normal(size=n), S)
    return rho, x


# ---------------------------------------------------------------- batteries

def formula_battery(n_jets=10_000, seed=0, kappas=(0.5, 0.7, 0.9), x_max=0.3, tolerances=None,
                    fd_step=1e-5, max_draws_factor=4):
    """Closed-form derivatives and matrix identities of the Jacobian engine.

    Finite-difference rows (``grad_b``, ``Dy``, ``grad_t``, ``Dz``) use
    absolute errors; the algebraic rows use relative Frobenius errors.
    Draws that fail a hypothesis are redrawn, up to
    ``max_draws_factor * n_jets`` draws in total.
    """
    tol = BatteryTolerances() if tolerances is None else tolerances
    rng = np.random.default_rng(seed)
    spec = FDSpec(step=fd_step)
    w = _Worst()
    accepted = draws = 0
    n = 2
    while accepted < n_jets and draws < max_draws_factor * n_jets:
        draws += 1
        media = MediaPair.from_kappa(float(rng.choice(kappas)))
        surface = _receiver(RECEIVERS[draws % len(RECEIVERS)])
        rho, x = random_fixture(rng, x_max, n)
        jet = rho.radial_jet(x)
        try:
            bd = J.build_bundle(jet, surface, media)
            fd = {"grad_b": fd_grad_b(rho, media, x, spec), "Dy": fd_Dy(rho, media, x, spec),
                  "grad_t": fd_grad_t(rho, surface, media, x, spec), "Dz": fd_Dz(rho, surface, media, x, spec)}
        except RefractorError:
            continue
        accepted += 1
        Dz, _ = J.build_Dz(bd)
        w.add("grad_b", *_matrix_errors(bd.grad_b, fd["grad_b"]))
        w.add("Dy", *_matrix_errors(bd.Dy, fd["Dy"]))
        w.add("grad_t", *_matrix_errors(bd.grad_t, fd["grad_t"]))
        w.add("Dz", *_matrix_errors(Dz, fd["Dz"]))
        w.add("mu0 = mu2^-1 mu1", *_matrix_errors(bd.mu0, np.linalg.solve(bd.mu2, bd.mu1)))
        w.add("det mu2", *_scalar_errors(J.det_mu2_closed(bd.ray), dense_det(bd.mu2)))
        w.add("det M", *_scalar_errors(bd.det_M, dense_det(bd.M)))
        w.add("M M^-1 = Id", *_matrix_errors(bd.M @ bd.M_inv, np.eye(n)))
        A_def, B_def = J.AB_definition(jet, bd.coeffs, bd.M_inv, bd.mu0)
        w.add("A definition vs simplified", *_matrix_errors(bd.A_mat, A_def))
        w.add("B definition vs simplified", *_matrix_errors(bd.B_mat, B_def))
    first = tol.fd_first
    return [
        w.row("grad_b", first, "abs"),
        w.row("Dy", first, "abs"),
        w.row("grad_t", first, "abs"),
        w.row("Dz", tol.fd_second, "abs"),
        w.row("mu0 = mu2^-1 mu1", tol.algebraic, "rel"),
        w.row("det mu2", tol.algebraic, "rel"),
        w.row("det M", tol.algebraic, "rel"),
        w.row("M M^-1 = Id", tol.algebraic, "rel"),
        w.row("A definition vs simplified", tol.algebraic, "rel"),
        w.row("B definition vs simplified", tol.algebraic, "rel"),
    ]


def origin_battery(n_samples=1_000, seed=0, kappas=(0.5, 0.7, 0.9), tolerances=None):
    """General Monge-Ampere residual at ``x = 0`` against the origin closed form.

    The relative error is ``|raw_general - raw_origin| / max(lhs, rhs)``.
    """
    tol = BatteryTolerances() if tolerances is None else tolerances
    rng = np.random.default_rng(seed)
    surface = quadratic_graph(5.0, 0.05)
    w = _Worst()
    draws = 0
    while w.count.get("residual at origin", 0) < n_samples and draws < 4 * n_samples:
        draws += 1
        media = MediaPair.from_kappa(float(rng.choice(kappas)))
        S = rng.normal(size=(2, 2))
        jet = RadialJet(np.zeros(2), rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5, 2), S + S.T)
        f_val, g_val = rng.uniform(0.5, 2.0, 2)
        try:
            gen = J.ma_residual(jet, surface, media, f_val, g_val)
            org = J.ma_residual_at_origin(jet, surface, media, f_val, g_val)
        except RefractorError:
            continue
        scale = max(abs(gen.lhs), abs(gen.rhs))
        d = abs(gen.raw - org.raw)
        w.add("residual at origin", d, d / scale)
    return [w.row("residual at origin", tol.origin, "rel")]


def random_oval(rng, kappas=(0.5, 0.7, 0.9), tau=0.05):
    """An oval with target above the source and a direction in its visible cap."""
    kappa = float(rng.choice(kappas))
    while True:
        P = np.array([*rng.uniform(-1.0, 1.0, 2), rng.uniform(2.0, 5.0)])
        nP = np.linalg.norm(P)
        b = nP + rng.uniform(0.05, 0.95) * (nP / kappa - nP)
        oval = OvalSpec(P, b, kappa, tau=tau)
        # direction within the visibility cone of P, inside the refracting cap
        cos_max = kappa + tau
        c = rng.uniform(cos_max, 1.0)
        e = rng.normal(size=3)
        u = unit(P)
        e = unit(e - (e @ u) * u)
        X = c * u + np.sqrt(1.0 - c * c) * e
        if X[-1] > 0.1 and oval.in_cap(X):
            return oval, X


def oval_battery(n_samples=1_000, seed=0, kappas=(0.5, 0.7, 0.9), tau=0.05, tolerances=None):
    """Focusing of single ovals: refracted rays hit ``P`` and ``Dz`` vanishes."""
    tol = BatteryTolerances() if tolerances is None else tolerances
    rng = np.random.default_rng(seed)
    w = _Worst()
    for _ in range(n_samples):
        oval, X = random_oval(rng, kappas, tau)
        media = MediaPair.from_kappa(oval.kappa)
        ang = oval_refraction_check(X, oval, media)
        w.add("oval focusing angle", ang, ang)
        x = X[:-1]
        jet = oval_jet(x, oval)
        bd = J.build_bundle(jet, plane(oval.P[-1]), media)
        Dz, _ = J.build_Dz(bd)
        dz = float(np.abs(Dz).max())
        w.add("oval Dz sup norm", dz, dz)
        hit = float(np.linalg.norm(bd.Z - oval.P) / np.linalg.norm(oval.P))
        w.add("oval traced hit", hit, hit)
    return [w.row("oval focusing angle", tol.focusing, "abs"),
            w.row("oval Dz sup norm", tol.oval_Dz, "abs"),
            w.row("oval traced hit", tol.focusing, "rel")]

