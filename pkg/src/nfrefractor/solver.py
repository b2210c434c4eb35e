"""Semi-discrete refractors as envelopes of lower Cartesian ovals.

Given targets ``Z_1..Z_k`` on the receiver with masses ``g_i``, the refractor
is ``rho(x) = max_i h(X(x), Z_i, b_i)``: every oval supports ``rho`` from
below and touches it on the cell ``{i*(x) = i}``, whose rays are all refracted
into ``Z_i``. Raising ``b_i`` lowers ``h_i`` and so shrinks the cell of
target ``i``; the solver adjusts ``b_2..b_k`` (``b_1`` stays pinned) until
the energy ``G_i`` of each cell matches ``g_i``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapViolation, ConvergenceError, DomainError, HypothesisViolation, QuadratureError
from .ovals import OvalSpec, cap_threshold, oval_jet, oval_radial_many
from .receiver import intersect_ray
from .refraction import MediaPair, refracted_direction
from .sphere import lift_many

# ---------------------------------------------------------------- problem data


@dataclass(frozen=True)
class SourceDensity:
    """``f(x) = sum_k coeffs[k] |x|^(2k)``, a density per unit sphere measure."""

    coeffs: tuple = (1.0,)

    def __call__(self, xs):
        xs = np.asarray(xs, dtype=float)
        r2 = np.einsum("...i,...i->...", xs, xs)
        return np.polynomial.polynomial.polyval(r2, np.asarray(self.coeffs, float))

    @classmethod
    def constant(cls, value=1.0):
        return cls((float(value),))


@dataclass(frozen=True)
class DiskDomain:
    """Chart disk ``|x - center| <= radius``."""

    center: tuple
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if not 0.0 < self.radius:
            raise DomainError("disk radius must be positive")
        if np.linalg.norm(c) + self.radius >= 1.0:
            raise DomainError("the source disk must lie inside the open unit chart ball")

    @property
    def n(self):
        return len(self.center)

    def contains(self, xs):
        xs = np.asarray(xs, dtype=float)
        d = xs - np.asarray(self.center, float)
        return np.einsum("...i,...i->...", d, d) <= self.radius ** 2


@dataclass(frozen=True)
class TargetPoint:
    Z: np.ndarray
    mass: float


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Cell-centred grid on a source disk.

    ``points`` are the cell centres inside the disk, ``index`` their integer
    grid coordinates, ``weights`` the source energy ``f/x_{n+1} * area`` of
    each cell and ``width`` the cell side.
    """

    points: np.ndarray
    index: np.ndarray
    weights: np.ndarray
    width: float
    cells_per_side: int

    @property
    def directions(self):
        return lift_many(self.points)

    @property
    def total(self):
        return float(self.weights.sum())


def make_grid(domain, density, cells_per_side):
    """Uniform ``m^n`` grid over the disk's bounding box, keeping centres inside the disk."""
    m = int(cells_per_side)
    if m < 8:
        raise DomainError("grid size must be at least 8 cells per side")
    n = domain.n
    c = np.asarray(domain.center, float)
    width = 2.0 * domain.radius / m
    ticks = -domain.radius + width * (np.arange(m) + 0.5)
    mesh = np.meshgrid(*([np.arange(m)] * n), indexing="ij")
    index = np.stack([g.ravel() for g in mesh], axis=1)
    pts = c + ticks[index]
    keep = domain.contains(pts)
    pts, index = pts[keep], index[keep]
    xn = np.sqrt(1.0 - np.einsum("ij,ij->i", pts, pts))
    weights = density(pts) / xn * width ** n
    return QuadratureGrid(pts, index, weights, width, m)


@dataclass(frozen=True, eq=False)
class EnergyProblem:
    """Source, targets, media and receiver of a semi-discrete refractor problem."""

    density: SourceDensity
    domain: DiskDomain
    targets: tuple
    media: MediaPair
    surface: object
    tau: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise DomainError("at least one target is required")
        if self.media.kappa >= 1.0:
            raise DomainError("oval envelopes need kappa < 1")
        if not 0.0 < self.tau < 1.0 - self.media.kappa:
            raise DomainError(f"tau must lie in (0, 1 - kappa), got {self.tau}")
        for i, t in enumerate(self.targets):
            if not t.mass > 0.0:
                raise DomainError(f"target {i} has non-positive mass")
            if np.linalg.norm(t.Z) == 0.0:
                raise HypothesisViolation("H4", f"target {i} coincides with the source")

    @property
    def Zs(self):
        return np.array([np.asarray(t.Z, float) for t in self.targets])

    @property
    def masses(self):
        return np.array([t.mass for t in self.targets], float)

    def visibility_margin(self, grid):
        """``min over cells and targets of X·Z/|Z| - kappa``; must be at least ``tau``."""
        Zs = self.Zs
        cos = grid.directions @ (Zs / np.linalg.norm(Zs, axis=1, keepdims=True)).T
        return float(cos.min() - self.media.kappa)

    def check(self, grid):
        """Validate visibility, receiver membership and the side of the source."""
        margin = self.visibility_margin(grid)
        if margin < self.tau:
            raise HypothesisViolation(
                "visibility", f"min X·Z/|Z| - kappa = {margin:.4g} is below tau = {self.tau}")
        for i, Z in enumerate(self.Zs):
            if abs(float(self.surface.psi(Z))) > 1e-9 * max(1.0, np.linalg.norm(Z)):
                raise DomainError(f"target {i} is not on the receiver (psi = {self.surface.psi(Z):.3g})")
            g = self.surface.grad_psi(Z)
            if not g[-1] > 0.0:
                raise HypothesisViolation("H2", f"psi^(n+1) <= 0 at target {i}")
        if not float(self.surface.psi(np.zeros(self.domain.n + 1))) < 0.0:
            raise HypothesisViolation("H4", "the source is not on the source side of the receiver")

    def normalized(self, grid):
        """Copy with masses rescaled so that they sum to the quadrature total."""
        s = self.masses.sum()
        targets = [TargetPoint(t.Z, t.mass * grid.total / s) for t in self.targets]
        return replace(self, targets=tuple(targets))


# ---------------------------------------------------------------- envelope


@dataclass(frozen=True, eq=False)
class RefractorEnvelope:
    """``rho = max_i h(X, Z_i, b_i)`` with ties broken toward the lowest index."""

    Zs: np.ndarray
    b_vec: np.ndarray
    kappa: float

    def __post_init__(self):
        Zs = np.atleast_2d(np.asarray(self.Zs, float))
        b = np.asarray(self.b_vec, float).reshape(-1)
        object.__setattr__(self, "Zs", Zs)
        object.__setattr__(self, "b_vec", b)
        if Zs.shape[0] != b.shape[0]:
            raise DomainError("one b per target is required")
        for Z, bi in zip(Zs, b):
            OvalSpec(Z, bi, self.kappa)

    @property
    def size(self):
        return self.b_vec.shape[0]

    def oval(self, i):
        return OvalSpec(self.Zs[i], self.b_vec[i], self.kappa)

    def radii(self, Xs):
        """``(k, N)`` array of oval radii; ``nan`` outside each cap."""
        return np.stack([oval_radial_many(Xs, Z, b, self.kappa) for Z, b in zip(self.Zs, self.b_vec)])

    def evaluate(self, Xs):
        H = self.radii(Xs)
        filled = np.where(np.isnan(H), -np.inf, H)
        istar = np.argmax(filled, axis=0)
        rho = filled[istar, np.arange(filled.shape[1])]
        if np.any(~np.isfinite(rho)):
            raise CapViolation("no admissible oval at some source direction")
        return rho, istar

    def with_b(self, i, value):
        b = self.b_vec.copy()
        b[i] = value
        return RefractorEnvelope(self.Zs, b, self.kappa)


def envelope_eval(env, x):
    """``(rho(x), i*)`` at a single chart point."""
    X = lift_many(np.asarray(x, float)[None, :])
    rho, istar = env.evaluate(X)
    return float(rho[0]), int(istar[0])


def b_bounds(Z, kappa, Xs, slack=1e-9):
    """Interval of ``b`` for which the cap of ``O(Z, b)`` contains every direction in ``Xs``.

    The cap grows with ``b``; the lower end is found by bisection.
    """
    Z = np.asarray(Z, float)
    nZ = np.linalg.norm(Z)
    hi = nZ / kappa * (1.0 - 1e-12)
    min_dot = float(np.min(Xs @ Z))

    def ok(b):
        return min_dot - cap_threshold(Z, b, kappa) >= slack * nZ

    if not ok(hi):
        raise HypothesisViolation("visibility", "no oval around this target refracts every source direction")
    lo = nZ * (1.0 + 1e-12)
    if ok(lo):
        return lo, hi
    a, c = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + c)
        if ok(mid):
            c = mid
        else:
            a = mid
    return c, hi


# ---------------------------------------------------------------- energy


@dataclass(frozen=True)
class EnergyReport:
    traced_masses: np.ndarray
    target_masses: np.ndarray
    errors: np.ndarray
    sup_error: float
    total: float
    iterations: int = 0
    max_conservation_error: float = 0.0
    focusing_max_dev: float = float("nan")
    converged: bool = False
    history: list = field(default_factory=list)


def cell_masses(env, grid, Xs=None):
    Xs = grid.directions if Xs is None else Xs
    _, istar = env.evaluate(Xs)
    return np.bincount(istar, weights=grid.weights, minlength=env.size)


def focusing_check(problem, env, grid, samples=16, seed=0):
    """Max of ``|Z_hit - Z_i*| / |Z_i*|`` over traced sample cells.

    Each sample is refracted with the analytic jet of its active oval and
    intersected with the receiver.
    """
    rng = np.random.default_rng(seed)
    pick = rng.choice(grid.points.shape[0], size=min(samples, grid.points.shape[0]), replace=False)
    Xs = grid.directions[pick]
    _, istar = env.evaluate(Xs)
    worst = 0.0
    for x, X, i in zip(grid.points[pick], Xs, istar):
        jet = oval_jet(x, env.oval(i))
        Y, _ = refracted_direction(jet, problem.media)
        _, Z = intersect_ray(problem.surface, jet.rho * X, Y)
        Zi = env.Zs[i]
        worst = max(worst, float(np.linalg.norm(Z - Zi) / np.linalg.norm(Zi)))
    return worst


def trace_energy(problem, env, grid, spot_checks=16, seed=0, strict=True):
    """Partition the grid by active oval and integrate the source energy of each cell."""
    G = cell_masses(env, grid)
    g = problem.masses
    if strict and np.any((G == 0.0) & (g > 0.0)):
        empty = np.flatnonzero((G == 0.0) & (g > 0.0)).tolist()
        raise QuadratureError(f"targets {empty} receive no grid cell")
    err = G - g
    dev = focusing_check(problem, env, grid, spot_checks, seed) if spot_checks else float("nan")
    return EnergyReport(G, g, err, float(np.abs(err).max()), grid.total,
                        max_conservation_error=abs(G.sum() - grid.total) / grid.total,
                        focusing_max_dev=dev)


# ---------------------------------------------------------------- solver


@dataclass(frozen=True)
class SolverSettings:
    """Sign-based adaptive step iteration on ``u_i = log(|Z_i|/kappa - b_i)``."""

    tol: float = 1e-3
    max_iters: int = 5000
    step0: float = 0.02
    grow: float = 1.05
    shrink: float = 0.6
    min_step: float = 1e-12
    max_step: float = 1.0
    init_radius: float = 0.05
    raise_on_failure: bool = False

    def __post_init__(self):
        if not self.tol > 0.0:
            raise DomainError("tol must be positive")
        if not (0.0 < self.shrink < 1.0 < self.grow):
            raise DomainError("need 0 < shrink < 1 < grow")
        if self.max_iters < 1:
            raise DomainError("max_iters must be positive")


def initial_b(problem, grid, radius, through=None):
    """``b_i`` of the ovals through ``M0 = radius X0`` (``X0`` the direction of the disk centre)."""
    X0 = lift_many(np.asarray(problem.domain.center, float)[None, :])[0] if through is None else through
    M0 = radius * X0
    kappa = problem.media.kappa
    b = np.array([radius + np.linalg.norm(M0 - Z) / kappa for Z in problem.Zs])
    return b


def solve(problem, grid, settings=None, b_init=None):
    """Adjust ``b_2..b_k`` until ``max_i |G_i - g_i| <= tol * sum g``.

    ``G_i > g_i`` raises ``b_i`` (shrinking cell ``i``); step sizes grow
    while the sign of the error persists and shrink when it flips.
    ``b_1`` stays at its initial value. Returns ``(envelope, report)``.
    """
    settings = SolverSettings() if settings is None else settings
    problem.check(grid)
    kappa = problem.media.kappa
    Zs = problem.Zs
    k = Zs.shape[0]
    Xs = grid.directions
    g = problem.masses
    if abs(g.sum() - grid.total) > 1e-6 * grid.total:
        raise DomainError(f"target masses sum to {g.sum():.6g} but the source energy is {grid.total:.6g}; "
                          "normalize the problem first")
    bounds = np.array([b_bounds(Z, kappa, Xs) for Z in Zs])
    b = initial_b(problem, grid, settings.init_radius) if b_init is None else np.asarray(b_init, float).copy()
    b = np.clip(b, bounds[:, 0], bounds[:, 1])
    cap = np.linalg.norm(Zs, axis=1) / kappa
    u = np.log(cap - b)
    u_max = np.log(cap - bounds[:, 0])
    u_min = np.log(cap - bounds[:, 1])
    step = np.full(k, settings.step0)
    prev = np.zeros(k)
    target = settings.tol * g.sum()
    history = []
    worst_conservation = 0.0
    it = 0
    while True:
        env = RefractorEnvelope(Zs, cap - np.exp(u), kappa)
        G = cell_masses(env, grid, Xs)
        err = G - g
        sup = float(np.abs(err).max())
        conservation = abs(G.sum() - grid.total) / grid.total
        worst_conservation = max(worst_conservation, conservation)
        history.append((it, sup, conservation))
        if sup <= target or it >= settings.max_iters:
            break
        sgn = np.sign(err)
        sgn[0] = 0.0
        same = sgn * prev
        step = np.where(same > 0, step * settings.grow, np.where(same < 0, step * settings.shrink, step))
        step = np.clip(step, settings.min_step, settings.max_step)
        # G_i too large -> raise b_i -> lower u_i
        u = np.clip(u - step * sgn, u_min, u_max)
        prev = sgn
        it += 1
    converged = sup <= target
    if not converged and settings.raise_on_failure:
        raise ConvergenceError(f"sup error {sup:.3g} above {target:.3g} after {it} iterations")
    rep = trace_energy(problem, env, grid, strict=False)
    rep = replace(rep, iterations=it, max_conservation_error=worst_conservation, converged=converged,
                  history=history)
    return env, rep


# ---------------------------------------------------------------- diagnostics


def legendre_b(rho_values, Xs, Z, kappa):
    """``max over the grid of rho(x) + |rho(x) X - Z| / kappa`` and the index where it is attained."""
    rho_values = np.asarray(rho_values, float)
    if rho_values.size == 0:
        raise DomainError("empty grid")
    F = rho_values + np.linalg.norm(rho_values[:, None] * Xs - np.asarray(Z, float), axis=1) / kappa
    j = int(np.argmax(F))
    return float(F[j]), j


def legendre_tolerance(rho_values, grid, Z, kappa, cells=2.0):
    """``cells`` grid widths times the discrete Lipschitz constant of ``rho + |rho X - Z|/kappa``."""
    Xs = grid.directions
    F = rho_values + np.linalg.norm(rho_values[:, None] * Xs - Z, axis=1) / kappa
    m = grid.cells_per_side
    n = grid.index.shape[1]
    flat = np.ravel_multi_index(grid.index.T, (m,) * n)
    lookup = np.full(m ** n, -1)
    lookup[flat] = np.arange(flat.size)
    L = 0.0
    for axis in range(n):
        nb = grid.index.copy()
        nb[:, axis] += 1
        ok = nb[:, axis] < m
        j = lookup[np.ravel_multi_index(nb[ok].T, (m,) * n)]
        has = j >= 0
        if np.any(has):
            L = max(L, float(np.max(np.abs(F[j[has]] - F[ok][has]))) / grid.width)
    # floor at rounding level: for a single oval the sum is constant and L vanishes
    return max(cells * grid.width * L, 64 * np.finfo(float).eps * float(np.max(np.abs(F))))


@dataclass(frozen=True)
class GlobalityReport:
    active: int
    checked: int
    violations: int
    max_excess: float


def support_globality_check(env, x0, grid, rho_reference=None, tol=1e-9):
    """Check that the oval active at ``x0`` lies below ``rho`` on the whole grid.

    ``rho_reference`` (values on the grid) defaults to ``env`` itself;
    passing the values of another envelope turns this into a comparison of a
    perturbed oval against a fixed refractor.
    """
    _, i = envelope_eval(env, x0)
    Xs = grid.directions
    rho = env.evaluate(Xs)[0] if rho_reference is None else np.asarray(rho_reference, float)
    h = oval_radial_many(Xs, env.Zs[i], env.b_vec[i], env.kappa)
    valid = ~np.isnan(h)
    excess = np.where(valid, h - rho, -np.inf)
    bad = excess > tol
    return GlobalityReport(i, int(valid.sum()), int(bad.sum()),
                           float(excess.max()) if valid.any() else float("nan"))


def supporting_sums(env, Xs):
    """``(k, N)`` array of ``rho + |rho X - Z_j|/kappa``; row ``j`` is at most ``b_j``."""
    rho, istar = env.evaluate(Xs)
    S = np.stack([rho + np.linalg.norm(rho[:, None] * Xs - Z, axis=1) / env.kappa for Z in env.Zs])
    return S, istar


def random_targets(surface, count, radius, rng, n=2):
    """``count`` points of a graph receiver above a disk of the given radius."""
    r = radius * np.sqrt(rng.uniform(size=count))
    if n != 2:
        raise DomainError("random_targets is implemented for n = 2")
    a = rng.uniform(0, 2 * np.pi, size=count)
    z = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    return np.concatenate([z, surface.phi(z)[:, None]], axis=1)


@dataclass(frozen=True)
class ConsistencyReport:
    """Dual checks of a solved envelope.

    ``legendre_ratio`` is the worst ``|legendre_b - b_i| / tolerance_i``;
    ``globality`` has one report per probe point; ``control_violations``
    counts the violations found after lowering the active ``b`` at each
    probe point by ``perturbation`` (a detector that works reports > 0 for
    every probe).
    """

    legendre_values: np.ndarray
    legendre_tolerances: np.ndarray
    legendre_ratio: float
    globality: list
    control_violations: list
    max_supporting_excess: float

    @property
    def globality_violations(self):
        return int(sum(r.violations for r in self.globality))

    @property
    def control_detected(self):
        return bool(self.control_violations) and min(self.control_violations) > 0


def consistency_report(env, grid, cells=2.0, points=16, perturbation=1e-4, seed=0):
    """Legendre recovery of every ``b_i``, support globality and its negative control."""
    Xs = grid.directions
    rho, _ = env.evaluate(Xs)
    vals, tols = [], []
    for Z in env.Zs:
        vals.append(legendre_b(rho, Xs, Z, env.kappa)[0])
        tols.append(legendre_tolerance(rho, grid, Z, env.kappa, cells))
    vals, tols = np.array(vals), np.array(tols)
    ratio = float(np.max(np.abs(vals - env.b_vec) / tols))
    rng = np.random.default_rng(seed)
    pick = rng.choice(grid.points.shape[0], size=min(points, grid.points.shape[0]), replace=False)
    glob, control = [], []
    for x0 in grid.points[pick]:
        rep = support_globality_check(env, x0, grid)
        glob.append(rep)
        i = rep.active
        lowered = env.with_b(i, max(env.b_vec[i] - perturbation, np.linalg.norm(env.Zs[i]) * (1 + 1e-12)))
        control.append(support_globality_check(lowered, x0, grid, rho_reference=rho).violations)
    S, _ = supporting_sums(env, Xs)
    excess = float(np.max(S - env.b_vec[:, None]))
    return ConsistencyReport(vals, tols, ratio, glob, control, excess)
