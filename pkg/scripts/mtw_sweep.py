"""Sign of the A3 form at the origin across receiver curvatures and index ratios.

Prints one line per (kappa, receiver) pair with the verdict and the range of
sampled values. Concave receivers use ``K > 0`` in ``quadratic_graph``,
convex ones ``convex_quadratic_graph``; K = 0 is the plane.

Usage::

    python scripts/mtw_sweep.py --samples 2000 --curvatures 0 0.5 1 2
"""

import argparse

from nfrefractor.errors import RefractorError
from nfrefractor.mtw import A3Sampling, certify_A3
from nfrefractor.receiver import convex_quadratic_graph, plane, quadratic_graph
from nfrefractor.refraction import MediaPair


def receivers(curvatures, height):
    for K in curvatures:
        if K == 0:
            yield "plane", plane(height)
        else:
            yield f"concave K={K:g}", quadratic_graph(height, K)
            yield f"convex K={K:g}", convex_quadratic_graph(height, K)


def main(argv=None):
    ap = argparse.ArgumentParser(description="MTW sign sweep")
    ap.add_argument("--kappas", type=float, nargs="+", default=[0.5, 0.7, 0.9])
    ap.add_argument("--curvatures", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    ap.add_argument("--height", type=float, default=3.0)
    ap.add_argument("--v-range", type=float, nargs=2, default=[0.5, 2.0])
    ap.add_argument("--p-max", type=float, default=0.5)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    sampling = A3Sampling(tuple(args.v_range), args.p_max, args.samples, args.seed)
    print(f"{'kappa':>5s}  {'receiver':16s} {'verdict':26s} {'min H':>11s} {'max H':>11s}")
    for kappa in args.kappas:
        media = MediaPair.from_kappa(kappa)
        for name, surface in receivers(args.curvatures, args.height):
            try:
                rep = certify_A3(surface, media, sampling)
            except RefractorError as exc:
                print(f"{kappa:5.2f}  {name:16s} not traceable ({type(exc).__name__})")
                continue
            print(f"{kappa:5.2f}  {name:16s} {rep.verdict:26s} {rep.min_value:11.3e} {rep.max_value:11.3e}",
                  flush=True)


if __name__ == "__main__":
    main()
