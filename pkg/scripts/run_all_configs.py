"""Run every YAML file in configs/ through the CLI and tabulate the outcome.

Usage::

    python scripts/run_all_configs.py --out runs [--only solve mtw]
"""

import argparse
import sys
import time
from pathlib import Path

from nfrefractor.cli import main as nfr_main
from nfrefractor.config import read_yaml

ROOT = Path(__file__).resolve().parents[1]


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", type=Path, default=ROOT / "configs")
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--only", nargs="*", default=None, help="substrings of config names to keep")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    paths = sorted(args.configs.glob("*.yaml"))
    if args.only:
        paths = [p for p in paths if any(s in p.stem for s in args.only)]
    worst = 0
    print(f"{'config':28s} {'command':12s} {'exit':>4s} {'seconds':>8s}")
    for path in paths:
        command = read_yaml(path)["command"]
        start = time.perf_counter()
        code = nfr_main([command, "--config", str(path), "--out", str(args.out / path.stem)])
        elapsed = time.perf_counter() - start
        worst = max(worst, code)
        print(f"{path.stem:28s} {command:12s} {code:4d} {elapsed:8.1f}", flush=True)
    return worst


if __name__ == "__main__":
    sys.exit(main())
