"""Receiver hypersurfaces given implicitly by ``psi(Z) = 0``.

All evaluators broadcast over leading axes: ``psi`` maps ``(..., n+1)`` to
``(...)``, ``grad_psi`` to ``(..., n+1)`` and ``hess_psi`` to
``(..., n+1, n+1)``. Graph receivers use ``psi(Z) = z_{n+1} - phi(z)`` so
that ``psi^{n+1} = 1 > 0``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, HypothesisViolation, NoIntersectionError
from .sphere import orthonormal_complement

PLANE = "plane"
GRAPH_QUADRATIC = "graph_quadratic"
GRAPH_CUSTOM = "graph_custom"
IMPLICIT = "implicit"


@dataclass(frozen=True)
class ReceiverSurface:
    """Target hypersurface with its implicit function and derivatives."""

    n: int
    psi: Callable
    grad_psi: Callable
    hess_psi: Callable
    kind: str = GRAPH_CUSTOM
    phi: Optional[Callable] = None
    grad_phi: Optional[Callable] = None
    hess_phi: Optional[Callable] = None
    scale: float = 1.0
    params: dict = field(default_factory=dict)

    def rotated(self, R):
        """The receiver ``R Σ`` (conjugated by the orthogonal matrix ``R``)."""
        R = np.asarray(R, dtype=float)
        psi, grad, hess = self.psi, self.grad_psi, self.hess_psi

        def psi_r(Z):
            return psi(np.asarray(Z) @ R)

        def grad_r(Z):
            return grad(np.asarray(Z) @ R) @ R.T

        def hess_r(Z):
            return R @ hess(np.asarray(Z) @ R) @ R.T

        return ReceiverSurface(self.n, psi_r, grad_r, hess_r, kind=IMPLICIT,
                               scale=self.scale, params={"base": self.kind, "rotation": R})


def _graph(n, phi, grad_phi, hess_phi, kind, scale, params):
    def psi(Z):
        Z = np.asarray(Z, dtype=float)
        return Z[..., -1] - phi(Z[..., :-1])

    def grad_psi(Z):
        Z = np.asarray(Z, dtype=float)
        g = -np.asarray(grad_phi(Z[..., :-1]), dtype=float)
        return np.concatenate([g, np.ones(g.shape[:-1] + (1,))], axis=-1)

    def hess_psi(Z):
        Z = np.asarray(Z, dtype=float)
        h = np.asarray(hess_phi(Z[..., :-1]), dtype=float)
        out = np.zeros(h.shape[:-2] + (n + 1, n + 1))
        out[..., :n, :n] = -h
        return out

    return ReceiverSurface(n, psi, grad_psi, hess_psi, kind=kind, phi=phi,
                           grad_phi=grad_phi, hess_phi=hess_phi, scale=scale, params=params)


def plane(height, n=2):
    """Horizontal plane ``z_{n+1} = height``."""
    c = float(height)
    return _graph(
        n,
        lambda z: np.full(np.shape(z)[:-1], c),
        lambda z: np.zeros(np.shape(z)),
        lambda z: np.zeros(np.shape(z)[:-1] + (n, n)),
        PLANE, abs(c), {"height": c},
    )


def tilted_plane(slope, height, n=2):
    """Plane ``z_{n+1} = slope·z + height``."""
    m = np.asarray(slope, dtype=float).reshape(n)
    c = float(height)
    return _graph(
        n,
        lambda z: np.asarray(z) @ m + c,
        lambda z: np.broadcast_to(m, np.shape(z)).copy(),
        lambda z: np.zeros(np.shape(z)[:-1] + (n, n)),
        PLANE, abs(c), {"height": c, "slope": m.tolist()},
    )


def quadratic_graph(height, K, n=2):
    """Concave quadratic graph ``z_{n+1} = height - z^T K z / 2`` with ``K >= 0``."""
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        K = float(K) * np.eye(n)
    if K.shape != (n, n):
        raise DomainError(f"K must be {n}x{n}")
    K = 0.5 * (K + K.T)
    if np.min(np.linalg.eigvalsh(K)) < -1e-14:
        raise DomainError("K must be positive semidefinite for a concave receiver")
    c = float(height)
    return _graph(
        n,
        lambda z: c - 0.5 * np.einsum("...i,ij,...j->...", z, K, z),
        lambda z: -np.asarray(z) @ K,
        lambda z: np.broadcast_to(-K, np.shape(z)[:-1] + (n, n)).copy(),
        GRAPH_QUADRATIC, abs(c), {"height": c, "K": K.tolist()},
    )


def convex_quadratic_graph(height, K, n=2):
    """Convex quadratic graph ``z_{n+1} = height + z^T K z / 2`` (``K >= 0``), bulging toward the source."""
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        K = float(K) * np.eye(n)
    if K.shape != (n, n):
        raise DomainError(f"K must be {n}x{n}")
    K = 0.5 * (K + K.T)
    if np.min(np.linalg.eigvalsh(K)) < -1e-14:
        raise DomainError("K must be positive semidefinite for a convex receiver")
    c = float(height)
    return _graph(
        n,
        lambda z: c + 0.5 * np.einsum("...i,ij,...j->...", z, K, z),
        lambda z: np.asarray(z) @ K,
        lambda z: np.broadcast_to(K, np.shape(z)[:-1] + (n, n)).copy(),
        GRAPH_QUADRATIC, abs(c), {"height": c, "K": K.tolist(), "convex": True},
    )


def sphere_cap(radius, center_height=0.0, n=2):
    """Upper cap ``z_{n+1} = center_height + sqrt(R^2 - |z|^2)`` of a sphere.

    Seen from a source below it the cap is a concave graph with second
    fundamental form ``-Id/R`` at the apex.
    """
    R = float(radius)
    c0 = float(center_height)

    def phi(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(invalid="ignore"):
            return c0 + np.sqrt(R * R - np.einsum("...i,...i->...", z, z))

    def grad_phi(z):
        z = np.asarray(z, dtype=float)
        s = np.sqrt(R * R - np.einsum("...i,...i->...", z, z))
        return -z / s[..., None]

    def hess_phi(z):
        z = np.asarray(z, dtype=float)
        s = np.sqrt(R * R - np.einsum("...i,...i->...", z, z))
        eye = np.eye(n)
        return -(eye / s[..., None, None] + z[..., :, None] * z[..., None, :] / s[..., None, None] ** 3)

    return _graph(n, phi, grad_phi, hess_phi, GRAPH_CUSTOM, R + abs(c0),
                  {"radius": R, "center_height": c0})


def custom_graph(phi, grad_phi, hess_phi, n=2, scale=1.0):
    """Graph receiver from user supplied ``phi``, its gradient and Hessian."""
    return _graph(n, phi, grad_phi, hess_phi, GRAPH_CUSTOM, float(scale), {})


def intersect_ray(surface, origin, Y, t_max=None, ratio=1.1, check_visibility=True):
    """First hit of the ray ``origin + t Y`` (``t > 0``) with the receiver.

    The root is bracketed on a geometric grid in ``t`` and polished by a
    Newton iteration safeguarded by bisection. Returns ``(t, Z)``.
    """
    origin = np.asarray(origin, dtype=float)
    Y = np.asarray(Y, dtype=float)
    scale = max(float(surface.scale), float(np.linalg.norm(origin)), 1.0)
    if t_max is None:
        t_max = 1e3 * scale
    f0 = float(surface.psi(origin))
    if not f0 < 0.0:
        raise NoIntersectionError("ray origin is not strictly on the source side (psi >= 0)")
    count = int(np.ceil(np.log(1e12) / np.log(ratio))) + 1
    ts = t_max * np.geomspace(1e-12, 1.0, count)
    fs = surface.psi(origin[None, :] + ts[:, None] * Y[None, :])
    hit = np.flatnonzero(fs >= 0.0)
    if hit.size == 0:
        raise NoIntersectionError(f"no intersection for t in (0, {t_max:.3g}]")
    k = hit[0]
    if fs[k] == 0.0:
        t = float(ts[k])
    else:
        lo = float(ts[k - 1]) if k > 0 else 0.0
        hi = float(ts[k])
        t = _polish(surface, origin, Y, lo, hi)
    Z = origin + t * Y
    if check_visibility:
        gY = float(surface.grad_psi(Z) @ Y)
        if not gY > 0.0:
            raise HypothesisViolation("H3", f"grad psi · Y = {gY:.3g} <= 0 at the hit point")
    return t, Z


def _polish(surface, origin, Y, lo, hi, max_iter=200):
    # invariant: psi(lo) < 0 <= psi(hi)
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        Z = origin + t * Y
        f = float(surface.psi(Z))
        if f == 0.0:
            return t
        if f < 0.0:
            lo = t
        else:
            hi = t
        df = float(surface.grad_psi(Z) @ Y)
        t_new = t - f / df if df != 0.0 else 0.5 * (lo + hi)
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 4e-16 * max(abs(t), 1e-300):
            return t_new
        if hi - lo <= 4e-16 * hi:
            return t_new
        t = t_new
    return t


def measure_weight(surface, Z):
    """Area factor ``|grad psi| / psi^{n+1}`` between Σ and its projection."""
    g = np.asarray(surface.grad_psi(Z), dtype=float)
    if not g[-1] > 0.0:
        raise HypothesisViolation("H2", f"psi^(n+1) = {g[-1]:.3g} <= 0")
    return float(np.linalg.norm(g) / g[-1])


def _check_frame(frame, Y, tol=1e-10):
    E = np.asarray(frame, dtype=float)
    m = Y.shape[0]
    if E.shape != (m, m - 1):
        raise DomainError(f"frame must be ({m}, {m - 1}), got {E.shape}")
    if np.max(np.abs(E.T @ E - np.eye(m - 1))) > tol or np.max(np.abs(E.T @ Y)) > tol:
        raise DomainError("frame is not an orthonormal basis of Y^perp")
    return E


def rotated_graph_jet(surface, Z, Y, frame=None):
    """Gradient and Hessian of ``phi_hat`` where Σ is ``{Z + E u + phi_hat(u) Y}``.

    ``E`` (the ``frame``) spans ``Y^perp``; derivatives are obtained by
    implicit differentiation of ``psi`` at ``u = 0``.
    """
    Y = np.asarray(Y, dtype=float)
    E = orthonormal_complement(Y) if frame is None else _check_frame(frame, Y)
    g = np.asarray(surface.grad_psi(Z), dtype=float)
    gY = float(g @ Y)
    if not gY > 0.0:
        raise HypothesisViolation("H3", f"grad psi · Y = {gY:.3g} <= 0 (Y tangent or facing away)")
    D_phi = -(E.T @ g) / gY
    T = E + np.outer(Y, D_phi)
    H_phi = -(T.T @ np.asarray(surface.hess_psi(Z), dtype=float) @ T) / gY
    return D_phi, 0.5 * (H_phi + H_phi.T)


def second_fundamental_form(surface, Z, Y, frame=None):
    """``Hess(phi_hat) / sqrt(1 + |D phi_hat|^2)`` in the chart aligned with ``Y``."""
    D_phi, H_phi = rotated_graph_jet(surface, Z, Y, frame)
    return H_phi / np.sqrt(1.0 + D_phi @ D_phi)
