"""Run configuration: YAML parsing, validation and construction of model objects.

A configuration file is a YAML mapping. Top-level keys:

``command``
    one of ``solve``, ``verify``, ``mtw_certify``, ``trace``, ``r_convexity``
    (``mtw-certify`` and ``r-convexity`` are accepted as aliases).
``seed``
    integer seed for every random draw of the run (default 0).
``output_dir``
    directory for the artifacts (default ``out``).
``media``
    either ``{kappa: k}`` or ``{n1: ..., n2: ...}``.
``receiver``
    ``{kind: plane, height}``, ``{kind: tilted_plane, slope, height}``,
    ``{kind: concave_quadratic, height, K}``, ``{kind: convex_quadratic, height, K}``
    or ``{kind: sphere_cap, radius, center_height}``. ``K`` is a scalar or an
    ``n x n`` list.
``source``
    ``{center, radius, density}`` with ``density`` the coefficients of
    ``f = sum_k c_k |x|^(2k)`` (default ``[1.0]``).
``targets``
    either a list of ``{Z, mass}`` or ``{random: {count, radius, mass_range}}``.
``tau``
    visibility margin (default 0.05).
``grid``
    ``{cells_per_side}`` (at least 8).
``solver``
    fields of :class:`nfrefractor.solver.SolverSettings`.
``diagnostics``
    ``{legendre_cells, globality_points, perturbation}`` for the solve checks.
``verify``
    ``{n_jets, n_origin, n_ovals, kappas, x_max, fd_step, tolerances: {...}}``.
``mtw``
    ``{v_range, p_max, n_samples, dual_route, margin, dual_route_tol, expect}``.
``trace``
    ``{rho: {kind, ...}, points: [[x1, x2], ...], f, g}``.
``r_convexity``
    ``{patches: [{center, radius}, ...], vertices, pairs, max_tilt, steps, expect_connected}``.

Unknown keys are rejected so that typos cannot silently fall back to defaults.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, HypothesisViolation, RefractorError
from .refraction import KAPPA_GAP, MediaPair
from .receiver import convex_quadratic_graph, plane, quadratic_graph, sphere_cap, tilted_plane

COMMANDS = ("solve", "verify", "mtw_certify", "trace", "r_convexity")
ALIASES = {"mtw-certify": "mtw_certify", "r-convexity": "r_convexity"}
RECEIVER_KINDS = ("plane", "tilted_plane", "concave_quadratic", "convex_quadratic", "sphere_cap")
MTW_VERDICTS = ("negative_definite", "positive_definite_regime", "indefinite", "any")


# ---------------------------------------------------------------- blocks


@dataclass(frozen=True)
class ReceiverConfig:
    kind: str = "plane"
    height: float = 3.0
    slope: tuple = (0.0, 0.0)
    K: object = 0.0
    radius: float = 4.0
    center_height: float = 0.0


@dataclass(frozen=True)
class SourceConfig:
    center: tuple = (0.0, 0.0)
    radius: float = 0.4
    density: tuple = (1.0,)


@dataclass(frozen=True)
class RandomTargets:
    count: int = 20
    radius: float = 0.6
    mass_range: tuple = (0.5, 1.5)


@dataclass(frozen=True)
class TargetsConfig:
    points: tuple = ()
    random: object = None


@dataclass(frozen=True)
class GridConfig:
    cells_per_side: int = 256


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-3
    max_iters: int = 5000
    step0: float = 0.02
    grow: float = 1.05
    shrink: float = 0.6
    init_radius: float = 0.05


@dataclass(frozen=True)
class DiagnosticsConfig:
    legendre_cells: float = 2.0
    globality_points: int = 16
    perturbation: float = 1e-4


@dataclass(frozen=True)
class VerifyTolerances:
    fd_first: float = 1e-6
    fd_second: float = 1e-5
    algebraic: float = 1e-9
    origin: float = 1e-9
    focusing: float = 1e-7
    oval_Dz: float = 1e-7


@dataclass(frozen=True)
class VerifyConfig:
    n_jets: int = 10_000
    n_origin: int = 1_000
    n_ovals: int = 1_000
    kappas: tuple = (0.5, 0.7, 0.9)
    x_max: float = 0.3
    fd_step: float = 1e-5
    tolerances: VerifyTolerances = field(default_factory=VerifyTolerances)


@dataclass(frozen=True)
class MTWConfig:
    v_range: tuple = (0.5, 2.0)
    p_max: float = 0.5
    n_samples: int = 10_000
    dual_route: bool = False
    margin: float = 0.1
    dual_route_tol: float = 1e-5
    expect: str = "any"


@dataclass(frozen=True)
class RhoConfig:
    kind: str = "taylor_quadratic"
    c: float = 1.0
    a: float = 0.0
    g: tuple = (0.0, 0.0)
    S: tuple = ((0.0, 0.0), (0.0, 0.0))
    P: tuple = (0.0, 0.0, 3.0)
    b: float = 0.0
    eps: float = 0.0


@dataclass(frozen=True)
class TraceConfig:
    rho: RhoConfig = field(default_factory=RhoConfig)
    points: tuple = ((0.0, 0.0),)
    f: float = 1.0
    g: float = 1.0


@dataclass(frozen=True)
class PatchConfig:
    center: tuple = (0.0, 0.0, 3.0)
    radius: float = 1.0


@dataclass(frozen=True)
class RConvexityConfig:
    patches: tuple = ()
    vertices: tuple = ((0.0, 0.0, 0.5),)
    pairs: int = 32
    max_tilt: float = 0.4
    steps: int = 1024
    expect_connected: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; build it with :func:`parse_config` or :func:`load_config`."""

    command: str
    seed: int = 0
    output_dir: str = "out"
    kappa: float = 0.7
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    targets: TargetsConfig = field(default_factory=TargetsConfig)
    tau: float = 0.05
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    mtw: MTWConfig = field(default_factory=MTWConfig)
    trace: TraceConfig = field(default_factory=TraceConfig)
    r_convexity: RConvexityConfig = field(default_factory=RConvexityConfig)

    @property
    def media(self):
        return MediaPair.from_kappa(self.kappa)

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    # model objects -------------------------------------------------------

    def build_receiver(self):
        r = self.receiver
        if r.kind == "plane":
            return plane(r.height)
        if r.kind == "tilted_plane":
            return tilted_plane(r.slope, r.height)
        if r.kind == "concave_quadratic":
            return quadratic_graph(r.height, np.asarray(r.K, float))
        if r.kind == "convex_quadratic":
            return convex_quadratic_graph(r.height, np.asarray(r.K, float))
        return sphere_cap(r.radius, r.center_height)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- parsing


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _block(cls, data, path):
    """Instantiate the dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    kwargs = {}
    for key, value in data.items():
        sub = NESTED.get((cls, key))
        kwargs[key] = _block(sub, value, f"{path}.{key}") if sub else _tuplify(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


NESTED = {
    (VerifyConfig, "tolerances"): VerifyTolerances,
    (TraceConfig, "rho"): RhoConfig,
}


def _media_kappa(data):
    if data is None:
        return 0.7
    if not isinstance(data, dict):
        raise ConfigError("media", "expected a mapping with kappa or n1/n2")
    unknown = sorted(set(data) - {"kappa", "n1", "n2"})
    if unknown:
        raise ConfigError(f"media.{unknown[0]}", "unknown key")
    if "kappa" in data:
        if "n1" in data or "n2" in data:
            raise ConfigError("media", "give either kappa or n1/n2, not both")
        return float(data["kappa"])
    try:
        n1, n2 = float(data["n1"]), float(data["n2"])
    except KeyError as exc:
        raise ConfigError(f"media.{exc.args[0]}", "missing refractive index") from None
    if not (n1 > 0 and n2 > 0):
        raise ConfigError("media", "refractive indices must be positive")
    return n1 / n2


def _targets(data):
    if data is None:
        return TargetsConfig()
    if isinstance(data, list):
        pts = []
        for i, item in enumerate(data):
            if not isinstance(item, dict) or set(item) != {"Z", "mass"}:
                raise ConfigError(f"targets[{i}]", "each target needs exactly the keys Z and mass")
            pts.append((tuple(float(v) for v in item["Z"]), float(item["mass"])))
        return TargetsConfig(points=tuple(pts))
    if isinstance(data, dict) and set(data) == {"random"}:
        return TargetsConfig(random=_block(RandomTargets, data["random"], "targets.random"))
    raise ConfigError("targets", "expected a list of {Z, mass} or {random: {...}}")


def _patches(data):
    if data is None:
        return RConvexityConfig()
    if not isinstance(data, dict):
        raise ConfigError("r_convexity", "expected a mapping")
    data = dict(data)
    patches = data.pop("patches", None) or []
    block = _block(RConvexityConfig, data, "r_convexity")
    parsed = tuple(_block(PatchConfig, p, f"r_convexity.patches[{i}]") for i, p in enumerate(patches))
    return dataclasses.replace(block, patches=parsed)


TOP_LEVEL = {"command", "seed", "output_dir", "media", "receiver", "source", "targets", "tau", "grid",
             "solver", "diagnostics", "verify", "mtw", "trace", "r_convexity"}


def parse_config(data, overrides=None):
    """Build a :class:`RunConfig` from a mapping and validate it.

    ``overrides`` may set ``seed`` and ``output_dir`` (the CLI flags).
    """
    if not isinstance(data, dict):
        raise ConfigError("<root>", "the configuration must be a mapping")
    data = dict(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    unknown = sorted(set(data) - TOP_LEVEL)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    command = data.get("command")
    command = ALIASES.get(command, command)
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}, got {command!r}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")
    cfg = RunConfig(
        command=command,
        seed=seed,
        output_dir=str(data.get("output_dir", "out")),
        kappa=_media_kappa(data.get("media")),
        receiver=_block(ReceiverConfig, data.get("receiver"), "receiver"),
        source=_block(SourceConfig, data.get("source"), "source"),
        targets=_targets(data.get("targets")),
        tau=float(data.get("tau", 0.05)),
        grid=_block(GridConfig, data.get("grid"), "grid"),
        solver=_block(SolverConfig, data.get("solver"), "solver"),
        diagnostics=_block(DiagnosticsConfig, data.get("diagnostics"), "diagnostics"),
        verify=_block(VerifyConfig, data.get("verify"), "verify"),
        mtw=_block(MTWConfig, data.get("mtw"), "mtw"),
        trace=_block(TraceConfig, data.get("trace"), "trace"),
        r_convexity=_patches(data.get("r_convexity")),
    )
    validate(cfg)
    return cfg


def read_yaml(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from None


def load_config(path, overrides=None):
    return parse_config(read_yaml(path), overrides)


# ---------------------------------------------------------------- validation


def _positive(value, name):
    if not (isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0):
        raise ConfigError(name, f"must be a positive number, got {value!r}")


def _validate_receiver(cfg):
    r = cfg.receiver
    if r.kind not in RECEIVER_KINDS:
        raise ConfigError("receiver.kind", f"must be one of {', '.join(RECEIVER_KINDS)}")
    try:
        surface = cfg.build_receiver()
    except RefractorError as exc:
        raise ConfigError("receiver", str(exc)) from None
    origin = np.zeros(surface.n + 1)
    if not float(surface.psi(origin)) < 0.0:
        raise ConfigError("receiver", "H4: the source must lie strictly on the source side (psi(0) < 0)")
    if r.kind == "sphere_cap":
        _positive(r.radius, "receiver.radius")
    return surface


def validate(cfg):
    """Field-level checks plus the hypotheses that can be decided before any computation."""
    k = cfg.kappa
    if not k > 0 or abs(k - 1.0) < KAPPA_GAP:
        raise ConfigError("media", f"kappa regime: need kappa > 0 and |kappa - 1| >= {KAPPA_GAP}, got {k}")
    surface = _validate_receiver(cfg)
    if not 0.0 < cfg.tau < 1.0:
        raise ConfigError("tau", "must lie in (0, 1)")
    cmd = cfg.command
    if cmd == "solve":
        _validate_solve(cfg, surface)
    elif cmd == "verify":
        _validate_verify(cfg)
    elif cmd == "mtw_certify":
        _validate_mtw(cfg)
    elif cmd == "trace":
        _validate_trace(cfg)
    else:
        _validate_rconv(cfg)


def _validate_solve(cfg, surface):
    if not cfg.kappa < 1.0:
        raise ConfigError("media", "kappa regime: the oval envelope solver needs kappa < 1")
    if not cfg.tau < 1.0 - cfg.kappa:
        raise ConfigError("tau", f"visibility: tau must lie in (0, 1 - kappa) = (0, {1 - cfg.kappa:.6g})")
    if cfg.grid.cells_per_side < 8:
        raise ConfigError("grid.cells_per_side", "must be at least 8")
    for name in ("tol", "step0", "init_radius"):
        _positive(getattr(cfg.solver, name), f"solver.{name}")
    if cfg.solver.max_iters < 1:
        raise ConfigError("solver.max_iters", "must be at least 1")
    if not 0.0 < cfg.solver.shrink < 1.0 < cfg.solver.grow:
        raise ConfigError("solver", "need 0 < shrink < 1 < grow")
    for name in ("legendre_cells", "perturbation"):
        _positive(getattr(cfg.diagnostics, name), f"diagnostics.{name}")
    s = cfg.source
    _positive(s.radius, "source.radius")
    if len(s.center) != surface.n:
        raise ConfigError("source.center", f"must have {surface.n} coordinates")
    if np.linalg.norm(s.center) + s.radius >= 1.0:
        raise ConfigError("source", "the source disk must lie inside the open unit chart ball")
    if not s.density:
        raise ConfigError("source.density", "needs at least one coefficient")
    t = cfg.targets
    if t.random is None and not t.points:
        raise ConfigError("targets", "no targets given")
    if t.random is not None:
        if t.random.count < 1:
            raise ConfigError("targets.random.count", "must be at least 1")
        _positive(t.random.radius, "targets.random.radius")
        lo, hi = t.random.mass_range
        if not 0.0 < lo <= hi:
            raise ConfigError("targets.random.mass_range", "need 0 < low <= high")
        if cfg.receiver.kind == "sphere_cap":
            raise ConfigError("targets.random", "random targets need a graph receiver")
    for i, (Z, mass) in enumerate(t.points):
        if len(Z) != surface.n + 1:
            raise ConfigError(f"targets[{i}].Z", f"must have {surface.n + 1} coordinates")
        _positive(mass, f"targets[{i}].mass")
        Z = np.asarray(Z, float)
        if abs(float(surface.psi(Z))) > 1e-9 * max(1.0, np.linalg.norm(Z)):
            raise ConfigError(f"targets[{i}].Z", "is not on the receiver")
        if not surface.grad_psi(Z)[-1] > 0.0:
            raise ConfigError(f"targets[{i}].Z", "H2: psi^(n+1) must be positive at the target")
        if np.linalg.norm(Z) == 0.0:
            raise ConfigError(f"targets[{i}].Z", "H4: target coincides with the source")


def _validate_verify(cfg):
    v = cfg.verify
    for name in ("n_jets", "n_origin", "n_ovals"):
        if getattr(v, name) < 1:
            raise ConfigError(f"verify.{name}", "must be at least 1")
    for kappa in v.kappas:
        if not 0.0 < kappa < 1.0 - KAPPA_GAP:
            raise ConfigError("verify.kappas", "kappa regime: the batteries use 0 < kappa < 1")
    if not 0.0 < v.x_max < 1.0:
        raise ConfigError("verify.x_max", "must lie in (0, 1)")
    if not 1e-8 <= v.fd_step <= 1e-2:
        raise ConfigError("verify.fd_step", "must lie in [1e-8, 1e-2]")
    for name, val in dataclasses.asdict(v.tolerances).items():
        _positive(val, f"verify.tolerances.{name}")


def _validate_mtw(cfg):
    m = cfg.mtw
    lo, hi = m.v_range
    if not 0.0 < lo <= hi:
        raise ConfigError("mtw.v_range", "need 0 < v_min <= v_max")
    if not m.p_max >= 0.0:
        raise ConfigError("mtw.p_max", "must be non-negative")
    if m.n_samples < 1:
        raise ConfigError("mtw.n_samples", "must be at least 1")
    if not 0.0 <= m.margin < 1.0:
        raise ConfigError("mtw.margin", "must lie in [0, 1)")
    _positive(m.dual_route_tol, "mtw.dual_route_tol")
    if m.expect not in MTW_VERDICTS:
        raise ConfigError("mtw.expect", f"must be one of {', '.join(MTW_VERDICTS)}")
    if cfg.kappa > 1.0:
        # total internal reflection bound |p|^2 <= v^2/(kappa^2-1) at the smallest v
        bound = lo / np.sqrt(cfg.kappa ** 2 - 1.0)
        if m.p_max >= bound:
            raise ConfigError("mtw.p_max", f"kappa regime: need p_max < v_min/sqrt(kappa^2-1) = {bound:.6g}")


def _validate_trace(cfg):
    t = cfg.trace
    _positive(t.f, "trace.f")
    _positive(t.g, "trace.g")
    if not t.points:
        raise ConfigError("trace.points", "needs at least one chart point")
    for i, x in enumerate(t.points):
        if len(x) != 2 or not np.dot(x, x) < 1.0:
            raise ConfigError(f"trace.points[{i}]", "must be a chart point with |x| < 1")
    if t.rho.kind not in ("constant", "radial_quadratic", "taylor_quadratic", "oval"):
        raise ConfigError("trace.rho.kind", "must be constant, radial_quadratic, taylor_quadratic or oval")


def _validate_rconv(cfg):
    r = cfg.r_convexity
    if not r.patches:
        raise ConfigError("r_convexity.patches", "needs at least one patch")
    for i, p in enumerate(r.patches):
        _positive(p.radius, f"r_convexity.patches[{i}].radius")
    if r.pairs < 1:
        raise ConfigError("r_convexity.pairs", "must be at least 1")
    if r.steps < 8:
        raise ConfigError("r_convexity.steps", "must be at least 8")
    if not 0.0 < r.max_tilt < np.pi / 2:
        raise ConfigError("r_convexity.max_tilt", "must lie in (0, pi/2)")
    for i, v in enumerate(r.vertices):
        if len(v) != 3 or not v[-1] > 0.0:
            raise ConfigError(f"r_convexity.vertices[{i}]", "must be a point with positive height")


def check_hypotheses(fn, where):
    """Run ``fn`` and convert a hypothesis failure into a :class:`ConfigError` naming ``where``."""
    try:
        return fn()
    except HypothesisViolation as exc:
        raise ConfigError(where, str(exc)) from None
