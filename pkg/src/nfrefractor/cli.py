"""Command line entry point ``nfr``.

Usage::

    nfr <command> --config <file> [--out <dir>] [--seed <int>] [--threads <k>]

Every run writes ``summary.txt``, ``config_echo.json`` and command-specific
CSV files into the output directory. Floats in CSV files use 17 significant
digits so that repeated runs can be compared byte for byte. Exit status: 0
when every check passes, 1 when a check fails, 2 for an invalid
configuration, 3 for a runtime error.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .battery import BatteryTolerances, formula_battery, origin_battery, oval_battery
from .config import ALIASES, COMMANDS, check_hypotheses, parse_config, read_yaml
from .errors import ConfigError, RefractorError
from .jacobian import build_bundle, build_Dz, ma_residual
from .mtw import A3Sampling, certify_A3
from .oracles import AnalyticRho
from .rconvex import ball_patch, r_convexity_probe, union_patch
from .solver import (DiskDomain, EnergyProblem, SolverSettings, SourceDensity, TargetPoint,
                     consistency_report, make_grid, random_targets, solve)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


# ---------------------------------------------------------------- output helpers


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


class Summary:
    """Collects ``name: value`` lines and pass/fail checks for ``summary.txt``."""

    def __init__(self, command):
        self.lines = [f"command: {command}"]
        self.checks = []

    def info(self, name, value):
        self.lines.append(f"{name}: {_fmt(value)}")

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def write(self, path, elapsed):
        out = list(self.lines)
        for name, ok, detail in self.checks:
            out.append(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
        out.append(f"elapsed_seconds: {elapsed:.3f}")
        out.append(f"RESULT: {'PASS' if self.passed else 'FAIL'}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(out) + "\n")
        return out


# ---------------------------------------------------------------- commands


def build_problem(cfg):
    """The :class:`EnergyProblem` and quadrature grid of a solve configuration (masses normalized)."""
    surface = cfg.build_receiver()
    density = SourceDensity(tuple(float(c) for c in cfg.source.density))
    domain = DiskDomain(tuple(cfg.source.center), cfg.source.radius)
    if cfg.targets.random is not None:
        rt = cfg.targets.random
        rng = np.random.default_rng(cfg.seed)
        Zs = random_targets(surface, rt.count, rt.radius, rng)
        masses = rng.uniform(rt.mass_range[0], rt.mass_range[1], size=rt.count)
    else:
        Zs = np.array([Z for Z, _ in cfg.targets.points], float)
        masses = np.array([m for _, m in cfg.targets.points], float)
    targets = [TargetPoint(Z, float(m)) for Z, m in zip(Zs, masses)]
    problem = check_hypotheses(
        lambda: EnergyProblem(density, domain, targets, cfg.media, surface, tau=cfg.tau), "targets")
    grid = make_grid(domain, density, cfg.grid.cells_per_side)
    check_hypotheses(lambda: problem.check(grid), "targets")
    return problem.normalized(grid), grid


def run_solve(cfg, out, summary):
    problem, grid = build_problem(cfg)
    s = cfg.solver
    settings = SolverSettings(tol=s.tol, max_iters=s.max_iters, step0=s.step0, grow=s.grow,
                              shrink=s.shrink, init_radius=s.init_radius)
    env, rep = solve(problem, grid, settings)
    d = cfg.diagnostics
    cons = consistency_report(env, grid, d.legendre_cells, d.globality_points, d.perturbation, cfg.seed)
    k = env.size
    write_csv(os.path.join(out, "envelope.csv"),
              ["i", "Z1", "Z2", "Z3", "b", "target_mass", "traced_mass", "error", "legendre_b",
               "legendre_tolerance"],
              [(i, *env.Zs[i], env.b_vec[i], rep.target_masses[i], rep.traced_masses[i], rep.errors[i],
                cons.legendre_values[i], cons.legendre_tolerances[i]) for i in range(k)])
    rho, istar = env.evaluate(grid.directions)
    write_csv(os.path.join(out, "rho_grid.csv"), ["x1", "x2", "rho", "active"],
              [(*x, r, i) for x, r, i in zip(grid.points, rho, istar)])
    write_csv(os.path.join(out, "energy_history.csv"), ["iteration", "sup_error", "conservation_error"],
              rep.history)
    write_csv(os.path.join(out, "globality.csv"), ["active", "checked", "violations", "max_excess",
                                                   "control_violations"],
              [(g.active, g.checked, g.violations, g.max_excess, c)
               for g, c in zip(cons.globality, cons.control_violations)])
    total = rep.total
    summary.info("targets", k)
    summary.info("grid_cells", grid.points.shape[0])
    summary.info("iterations", rep.iterations)
    summary.info("source_energy", total)
    summary.info("sup_error_over_total", rep.sup_error / total)
    summary.info("max_conservation_error", rep.max_conservation_error)
    summary.info("focusing_max_dev", rep.focusing_max_dev)
    summary.info("legendre_ratio", cons.legendre_ratio)
    summary.info("max_supporting_excess", cons.max_supporting_excess)
    summary.check("energy balance", rep.sup_error <= s.tol * problem.masses.sum(),
                  f"sup |G_i - g_i| / sum g = {rep.sup_error / total:.3e}, tol {s.tol:g}")
    summary.check("energy conservation", rep.max_conservation_error <= 1e-12,
                  f"{rep.max_conservation_error:.3e}")
    summary.check("focusing spot check", rep.focusing_max_dev <= 1e-6, f"{rep.focusing_max_dev:.3e}")
    summary.check("legendre recovers b", cons.legendre_ratio <= 1.0,
                  f"worst error / tolerance = {cons.legendre_ratio:.3e}")
    summary.check("support globality", cons.globality_violations == 0,
                  f"{cons.globality_violations} violations")
    summary.check("globality negative control", cons.control_detected,
                  f"min violations after lowering b by {d.perturbation:g}: {min(cons.control_violations)}")


def run_verify(cfg, out, summary):
    v = cfg.verify
    tol = BatteryTolerances(**vars(v.tolerances))
    rows = (formula_battery(v.n_jets, cfg.seed, v.kappas, v.x_max, tol, v.fd_step)
            + origin_battery(v.n_origin, cfg.seed, v.kappas, tol)
            + oval_battery(v.n_ovals, cfg.seed, v.kappas, cfg.tau, tol))
    write_csv(os.path.join(out, "verify.csv"),
              ["formula", "max_abs_err", "max_rel_err", "tolerance", "measure", "samples", "pass"],
              [(r.formula, r.max_abs, r.max_rel, r.tol, r.measure, r.samples, r.passed) for r in rows])
    for r in rows:
        err = r.max_abs if r.measure == "abs" else r.max_rel
        summary.check(r.formula, r.passed, f"{r.measure} {err:.3e} <= {r.tol:g}, {r.samples} samples")


def run_mtw(cfg, out, summary):
    m = cfg.mtw
    surface = cfg.build_receiver()
    sampling = A3Sampling(tuple(m.v_range), m.p_max, m.n_samples, cfg.seed, m.dual_route)
    rep = certify_A3(surface, cfg.media, sampling, m.margin)
    header = ["v", "p_norm", "p1", "p2", "xi1", "xi2", "eta1", "eta2", "value"]
    rows = rep.rows()
    if m.dual_route:
        header += ["value_lm", "value_fd"]
        rows = [(*r, s.value_lm, s.value_fd) for r, s in zip(rows, rep.samples)]
    write_csv(os.path.join(out, "mtw_samples.csv"), header, rows)
    summary.info("verdict", rep.verdict)
    summary.info("c0", rep.c0)
    summary.info("min_value", rep.min_value)
    summary.info("max_value", rep.max_value)
    w = rep.witness
    summary.info("witness", f"v={w.v:.6g} p={np.array2string(w.p, precision=6)} value={w.value:.6g}")
    if m.expect != "any":
        summary.check("verdict", rep.verdict == m.expect, f"expected {m.expect}, got {rep.verdict}")
        if m.expect != "indefinite":
            summary.check("c0 > 0", rep.c0 > 0.0, f"c0 = {rep.c0:.6g}")
    if m.dual_route:
        summary.info("max_dual_route_rel", rep.max_dual_route_rel)
        summary.check("dual route agreement", rep.max_dual_route_rel <= m.dual_route_tol,
                      f"{rep.max_dual_route_rel:.3e} <= {m.dual_route_tol:g}")


def _trace_rho(rc, kappa):
    if rc.kind == "constant":
        return AnalyticRho.constant(rc.c)
    if rc.kind == "radial_quadratic":
        return AnalyticRho.radial_quadratic(rc.c, rc.a)
    if rc.kind == "taylor_quadratic":
        return AnalyticRho.taylor_quadratic(rc.c, np.asarray(rc.g, float), np.asarray(rc.S, float))
    return AnalyticRho.oval(np.asarray(rc.P, float), rc.b, kappa, rc.eps)


def run_trace(cfg, out, summary):
    t = cfg.trace
    surface = cfg.build_receiver()
    media = cfg.media
    try:
        rho = _trace_rho(t.rho, cfg.kappa)
    except RefractorError as exc:
        raise ConfigError("trace.rho", str(exc)) from None
    bundles = []
    for i, x in enumerate(t.points):
        x = np.asarray(x, float)
        jet = check_hypotheses(lambda: rho.radial_jet(x), f"trace.points[{i}]")
        try:
            bundles.append((x, jet, build_bundle(jet, surface, media)))
        except RefractorError as exc:
            raise ConfigError(f"trace.points[{i}]", f"at x = {x.tolist()}: {exc}") from None
    rows = []
    for x, jet, bd in bundles:
        _, det_Dz = build_Dz(bd)
        res = ma_residual(jet, surface, media, t.f, t.g, bundle=bd)
        rows.append((*x, jet.rho, *bd.Y, bd.t, *bd.Z, bd.det_M, det_Dz, res.raw, res.relative, res.psd_branch))
    write_csv(os.path.join(out, "trace.csv"),
              ["x1", "x2", "rho", "Y1", "Y2", "Y3", "t", "Z1", "Z2", "Z3", "det_M", "det_Dz", "residual",
               "relative_residual", "psd_branch"], rows)
    summary.info("rays", len(rows))
    summary.check("all rays traced under H1-H3", len(rows) == len(t.points))


def run_rconvexity(cfg, out, summary):
    r = cfg.r_convexity
    surface = cfg.build_receiver()
    patch = union_patch(*(ball_patch(p.center, p.radius) for p in r.patches))
    rep = r_convexity_probe(surface, patch, np.asarray(r.vertices, float), cfg.media, r.pairs, r.max_tilt,
                            r.steps, cfg.seed)
    write_csv(os.path.join(out, "r_convexity.csv"),
              ["v1", "v2", "v3", "nu1_1", "nu1_2", "nu1_3", "nu2_1", "nu2_2", "nu2_3", "runs", "hits"],
              [(*s.vertex, *s.nu1, *s.nu2, s.runs, s.hits) for s in rep.samples])
    summary.info("connected", rep.connected)
    summary.info("disconnected", rep.disconnected)
    summary.info("empty", rep.empty)
    summary.check("connectivity", rep.is_connected == r.expect_connected,
                  f"expected {'connected' if r.expect_connected else 'disconnected'}, "
                  f"{rep.disconnected} disconnected cones")


RUNNERS = {"solve": run_solve, "verify": run_verify, "mtw_certify": run_mtw, "trace": run_trace,
           "r_convexity": run_rconvexity}


# ---------------------------------------------------------------- entry point


def run(cfg, out_dir=None, threads=1, stream=None):
    """Execute a validated configuration; returns the exit status."""
    stream = sys.stdout if stream is None else stream
    out = cfg.output_dir if out_dir is None else out_dir
    os.makedirs(out, exist_ok=True)
    echo = cfg.to_dict()
    echo["output_dir"] = str(out)
    with open(os.path.join(out, "config_echo.json"), "w", encoding="utf-8") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary = Summary(cfg.command)
    summary.info("seed", cfg.seed)
    summary.info("threads", threads)
    start = time.perf_counter()
    status = EXIT_OK
    try:
        RUNNERS[cfg.command](cfg, out, summary)
    except ConfigError as exc:
        summary.check("configuration", False, str(exc))
        status = EXIT_CONFIG
    except RefractorError as exc:
        summary.check("runtime", False, f"{type(exc).__name__}: {exc}")
        status = EXIT_RUNTIME
    lines = summary.write(os.path.join(out, "summary.txt"), time.perf_counter() - start)
    print("\n".join(lines), file=stream)
    if status == EXIT_OK and not summary.passed:
        status = EXIT_FAIL
    return status


def build_parser():
    p = argparse.ArgumentParser(prog="nfr", description="Near-field refractor computations.")
    p.add_argument("command", choices=sorted(set(COMMANDS) | set(ALIASES)))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides seed)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; the computations are single-threaded, the value is recorded")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    command = ALIASES.get(args.command, args.command)
    try:
        data = read_yaml(args.config)
        if isinstance(data, dict) and "command" in data:
            declared = ALIASES.get(data["command"], data["command"])
            if declared != command:
                raise ConfigError("command", f"file says {declared!r}, command line says {command!r}")
        elif isinstance(data, dict):
            data = {**data, "command": command}
        cfg = parse_config(data, {"seed": args.seed})
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
