"""Timing and residuals of the tree oracle against the G and H recursions.

    python3 scripts/oracle_triangle.py --trees 50 --depth 4 --branching 3 --d 2 --N 4
"""

import argparse
import csv
import sys
import time

import numpy as np

from sigcum.cumulants import max_residual, random_tree, recursion_G, recursion_H, signature_cumulants


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--branching", type=int, default=3)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--N", type=int, default=4)
    ap.add_argument("--seed", type=int, default=20240)
    ap.add_argument("--float", action="store_true", help="float mode instead of exact rationals")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    out = csv.writer(sys.stdout)
    out.writerow(["tree", "nodes", "residual_G", "residual_H", "seconds_oracle", "seconds_G", "seconds_H"])
    for i in range(args.trees):
        depth = int(rng.integers(1, args.depth + 1))
        model = random_tree(rng, args.d, args.N, depth, args.branching, exact=not args.float)
        times = []
        for fn in (signature_cumulants, recursion_G, recursion_H):
            start = time.perf_counter()
            times.append((fn(model), time.perf_counter() - start))
        (oracle, t0), (G, t1), (H, t2) = times
        out.writerow([i, len(model.nodes), max_residual(oracle, G), max_residual(oracle, H),
                      f"{t0:.3f}", f"{t1:.3f}", f"{t2:.3f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
