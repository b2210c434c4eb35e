"""Semi-discrete solve on successively finer grids.

For each grid size the 20-target problem is solved from scratch; the table
reports iterations, the balance error, the drift of every b_i relative to the
finest grid and the Legendre ratio. Targets and masses come from the seed and
do not depend on the grid.

Usage::

    python scripts/solve_grid_study.py --sizes 64 128 256 --seed 0
"""

import argparse
import dataclasses
import time
from pathlib import Path

import numpy as np

from nfrefractor.cli import build_problem
from nfrefractor.config import load_config
from nfrefractor.solver import SolverSettings, consistency_report, solve

ROOT = Path(__file__).resolve().parents[1]


def run(cfg, size):
    cfg = dataclasses.replace(cfg, grid=dataclasses.replace(cfg.grid, cells_per_side=size))
    problem, grid = build_problem(cfg)
    s = cfg.solver
    start = time.perf_counter()
    env, rep = solve(problem, grid, SolverSettings(tol=s.tol, max_iters=s.max_iters, step0=s.step0,
                                                   grow=s.grow, shrink=s.shrink, init_radius=s.init_radius))
    elapsed = time.perf_counter() - start
    cons = consistency_report(env, grid)
    return env, rep, cons, elapsed


def main(argv=None):
    ap = argparse.ArgumentParser(description="grid refinement study for the oval-envelope solver")
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "solve_20_targets.yaml")
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    cfg = load_config(args.config, {"seed": args.seed})
    results = {m: run(cfg, m) for m in sorted(args.sizes)}
    b_ref = results[max(results)][0].b_vec
    print(f"{'cells':>6s} {'iters':>6s} {'sup/total':>10s} {'max|b-b_ref|':>13s} {'legendre':>9s} {'sec':>6s}")
    for m, (env, rep, cons, elapsed) in results.items():
        print(f"{m:6d} {rep.iterations:6d} {rep.sup_error / rep.total:10.2e} "
              f"{np.abs(env.b_vec - b_ref).max():13.3e} {cons.legendre_ratio:9.1e} {elapsed:6.1f}")


if __name__ == "__main__":
    main()
