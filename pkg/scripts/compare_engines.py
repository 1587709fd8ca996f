"""Per-probe inner iterations of C&CG and PC&CG on the same search.

Reads trace.csv from a `cligdt solve` run with `shadow = ccg` (the six-bus
config sets it).  Runs the solve first when the trace is missing.

    python3 scripts/compare_engines.py [--config data/six_bus/run.cfg]
"""
import argparse
import csv
import subprocess
import sys
from collections import defaultdict
from pathlib import Path

from cligdt.config import load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="data/six_bus/run.cfg")
    ap.add_argument("--rerun", action="store_true")
    args = ap.parse_args()
    trace = Path(load_config(args.config).output_dir) / "trace.csv"
    if args.rerun or not trace.exists():
        rc = subprocess.call(["cligdt", "solve", "--config", args.config, "--set", "shadow=ccg"])
        if rc:
            sys.exit(rc)
    iters = defaultdict(dict)
    with open(trace, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["inner_iterations"]:
                iters[float(row["alpha"])][row["engine"]] = int(row["inner_iterations"])
    total = defaultdict(int)
    print(f"{'alpha':>8} {'pccg':>6} {'ccg':>6}")
    for a in sorted(iters):
        r = iters[a]
        for e, k in r.items():
            total[e] += k
        print(f"{a:8.4f} {r.get('pccg', '-'):>6} {r.get('ccg', '-'):>6}")
    print(f"{'total':>8} {total['pccg']:>6} {total['ccg']:>6}")


if __name__ == "__main__":
    main()
