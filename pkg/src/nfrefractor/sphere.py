"""Chart arithmetic on the upper hemisphere and small dense linear algebra.

Points of the upper unit hemisphere are written ``X = (x, x_{n+1})`` with
``x`` in the open unit ball of R^n and ``x_{n+1} = sqrt(1 - |x|^2)``.
Tensor products follow ``(u ⊗ w)_{ij} = u_i w_j``.
"""

import numpy as np

from .errors import DomainError, SingularMatrixError

RANK_ONE_TOL = 1e-12


def lift(x):
    """Map a chart point ``x`` (``|x| < 1``) to the unit vector ``(x, sqrt(1-|x|^2))``."""
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    if not r2 < 1.0:
        raise DomainError(f"chart point must satisfy |x| < 1, got |x| = {np.sqrt(r2):.6g}")
    return np.append(x, np.sqrt(1.0 - r2))


def lift_many(xs):
    """Vectorised :func:`lift` over the leading axes of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    r2 = np.einsum("...i,...i->...", xs, xs)
    if np.any(r2 >= 1.0):
        raise DomainError("chart points must satisfy |x| < 1")
    return np.concatenate([xs, np.sqrt(1.0 - r2)[..., None]], axis=-1)


def chart(X):
    """Inverse of :func:`lift` for a unit vector in the open upper hemisphere."""
    X = np.asarray(X, dtype=float)
    if not X[-1] > 0.0:
        raise DomainError("direction is not in the open upper hemisphere")
    return X[:-1] / np.linalg.norm(X)


def unit(v):
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise DomainError("cannot normalise the zero vector")
    return v / nv


def outer(u, w):
    """Tensor product ``u ⊗ w``; satisfies ``(a⊗b)(c⊗d) = (b·c) a⊗d``."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape or u.ndim != 1:
        raise DomainError(f"outer needs two vectors of equal length, got {u.shape} and {w.shape}")
    return np.outer(u, w)


def _solve(D, rhs):
    try:
        return np.linalg.solve(D, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix D is singular") from exc


def sherman_morrison_det(D, xi, eta):
    """Determinant of ``D + xi ⊗ eta`` as ``(1 + eta·D^{-1} xi) det D``."""
    D = np.asarray(D, dtype=float)
    det_D = np.linalg.det(D)
    if det_D == 0.0:
        raise SingularMatrixError("matrix D is singular")
    return (1.0 + np.dot(eta, _solve(D, xi))) * det_D


def sherman_morrison_inv(D, xi, eta):
    """Inverse of ``D + xi ⊗ eta`` from ``D^{-1}`` by the rank-one update formula.

    Raises :class:`SingularMatrixError` when ``|1 + eta·D^{-1} xi| < 1e-12``.
    """
    D = np.asarray(D, dtype=float)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    D_inv = _solve(D, np.eye(D.shape[0]))
    u = D_inv @ xi
    w = eta @ D_inv
    denom = 1.0 + np.dot(eta, u)
    if abs(denom) < RANK_ONE_TOL:
        raise SingularMatrixError(f"rank-one update is degenerate (1 + eta·D^-1 xi = {denom:.3g})")
    return D_inv - np.outer(u, w) / denom


def is_symmetric(A, tol=1e-12):
    A = np.asarray(A, dtype=float)
    return bool(np.max(np.abs(A - A.T), initial=0.0) <= tol)


def orthonormal_complement(Y):
    """Columns spanning the orthogonal complement of the unit vector ``Y``.

    Returns an ``(n+1) x n`` matrix ``E`` with ``E^T E = Id`` and ``E^T Y = 0``.
    """
    Y = unit(Y)
    m = Y.shape[0]
    # Householder reflection exchanging e_{m} and -sign(y_m) Y; its other columns
    # span Y^perp. The sign choice avoids cancellation in e_m - Y near the pole.
    s = 1.0 if Y[-1] >= 0.0 else -1.0
    v = Y.copy()
    v[-1] += s
    v /= np.linalg.norm(v)
    Hh = np.eye(m) - 2.0 * np.outer(v, v)
    return Hh[:, :-1]


def rotation_about_axis(n, angle, plane=(0, 1)):
    """Rotation of R^{n+1} by ``angle`` in the coordinate plane ``plane``.

    With the default plane the last axis ``e_{n+1}`` is fixed.
    """
    R = np.eye(n + 1)
    i, j = plane
    c, s = np.cos(angle), np.sin(angle)
    R[i, i] = c
    R[j, j] = c
    R[i, j] = -s
    R[j, i] = s
    return R
