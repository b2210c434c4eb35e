"""Sampled R-convexity of a target patch.

For a vertex ``xi`` and unit vectors ``nu1, nu2`` the refraction cone is
swept by the rays ``xi + t Y(c)``, where ``Y(c)`` is the refraction of
``X = xi/|xi|`` at the normal ``nu(c) ∝ (1-c) nu1 + c nu2``, ``c in [0, 1]``.
A patch is R-convex at ``xi`` when, for every pair, the parameters ``c`` whose
rays land in the patch form a single interval.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoIntersectionError, TotalInternalReflection
from .receiver import intersect_ray
from .refraction import snell
from .sphere import orthonormal_complement, unit

DEGENERATE_TOL = 1e-10


def ball_patch(center, radius):
    """Points of the receiver within Euclidean distance ``radius`` of ``center``.

    On a sphere this is a geodesic ball.
    """
    center = np.asarray(center, float)

    def contains(Z):
        return bool(np.linalg.norm(np.asarray(Z) - center) <= radius)

    return contains


def union_patch(*patches):
    def contains(Z):
        return any(p(Z) for p in patches)

    return contains


def whole_patch(Z):
    return True


def cone_directions(X, nu1, nu2, media, steps=1024):
    """Refracted directions ``Y(c)`` on ``c = 0, 1/steps, ..., 1``; ``None`` where refraction fails."""
    X = unit(X)
    nu1, nu2 = unit(nu1), unit(nu2)
    out = []
    for c in np.linspace(0.0, 1.0, steps + 1):
        v = (1.0 - c) * nu1 + c * nu2
        nv = np.linalg.norm(v)
        if nv < DEGENERATE_TOL:
            raise DomainError("degenerate refraction cone: nu1 and nu2 cancel")
        try:
            out.append(snell(X, v / nv, media))
        except (DomainError, TotalInternalReflection):
            out.append(None)
    return out


def hit_mask(surface, vertex, directions, patch):
    """Boolean mask of the sweep parameters whose ray lands inside ``patch``."""
    mask = np.zeros(len(directions), dtype=bool)
    for k, Y in enumerate(directions):
        if Y is None:
            continue
        try:
            _, Z = intersect_ray(surface, vertex, Y, check_visibility=False)
        except NoIntersectionError:
            continue
        mask[k] = patch(Z)
    return mask


def count_runs(mask):
    """Number of maximal runs of ``True`` in a boolean sequence."""
    m = np.asarray(mask, dtype=int)
    if m.size == 0:
        return 0
    return int(m[0] + np.sum(np.diff(m) == 1))


@dataclass(frozen=True)
class ConeSample:
    vertex: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    runs: int
    hits: int


@dataclass(frozen=True)
class RConvexityReport:
    samples: list
    connected: int
    disconnected: int
    empty: int
    witnesses: list = field(default_factory=list)

    @property
    def is_connected(self):
        return self.disconnected == 0


def tilted_normal(X, tilt, azimuth):
    """Unit vector at angle ``tilt`` from ``X`` in the azimuthal direction ``azimuth``."""
    X = unit(X)
    E = orthonormal_complement(X)
    d = np.cos(azimuth) * E[:, 0]
    if E.shape[1] > 1:
        d = d + np.sin(azimuth) * E[:, 1]
    return np.cos(tilt) * X + np.sin(tilt) * unit(d)


def r_convexity_probe(surface, patch, vertices, media, pairs=32, max_tilt=0.4, steps=1024, seed=0):
    """Sweep refraction cones at each vertex and test the connectivity of their hit sets.

    ``pairs`` normal pairs are drawn per vertex with each normal within
    ``max_tilt`` radians of the vertex direction.
    """
    rng = np.random.default_rng(seed)
    samples, witnesses = [], []
    connected = disconnected = empty = 0
    for vertex in np.atleast_2d(np.asarray(vertices, float)):
        X = unit(vertex)
        for _ in range(pairs):
            t1, t2 = max_tilt * np.sqrt(rng.uniform(size=2))
            a1, a2 = rng.uniform(0.0, 2 * np.pi, size=2)
            nu1, nu2 = tilted_normal(X, t1, a1), tilted_normal(X, t2, a2)
            mask = hit_mask(surface, vertex, cone_directions(X, nu1, nu2, media, steps), patch)
            runs = count_runs(mask)
            s = ConeSample(vertex, nu1, nu2, runs, int(mask.sum()))
            samples.append(s)
            if runs == 0:
                empty += 1
            elif runs == 1:
                connected += 1
            else:
                disconnected += 1
                witnesses.append(s)
    return RConvexityReport(samples, connected, disconnected, empty, witnesses)
