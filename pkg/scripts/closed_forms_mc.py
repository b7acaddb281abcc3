"""Monte Carlo z-scores for the Brownian (constant covariance) and Lévy closed forms.

    python3 scripts/closed_forms_mc.py --paths 100000 --seed 20240
"""

import argparse
import csv
import sys

import numpy as np

from sigcum.cumulants import mc_expected_signature, mc_signature_cumulant
from sigcum.models import BrownianSampler, LevySampler, LevyTriplet, fawcett, levy_cumulant


def rows(name, kappa, se, ref):
    for word, value in kappa.items(skip_zero=False):
        if not word:
            continue
        s = float(se[word])
        z = (float(value) - float(ref[word])) / s if s > 0 else 0.0
        yield [name, "".join(map(str, word)), f"{value:.6g}", f"{s:.2g}", f"{float(ref[word]):.6g}", f"{z:.2f}"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=20240)
    args = ap.parse_args(argv)

    out = csv.writer(sys.stdout)
    out.writerow(["model", "word", "mc", "stderr", "closed_form", "z"])

    res = mc_expected_signature(BrownianSampler(np.eye(2), 1.0, 200), args.paths, seed=args.seed, N=4)
    kappa, se = mc_signature_cumulant(res)
    out.writerows(rows("brownian", kappa, se, fawcett(2, 0.0, 1.0, 4)))

    tr = LevyTriplet([0.1, -0.05], [[0.2, 0.05], [0.05, 0.1]], [(1.0, [0.5, -0.3]), (0.5, [-0.6, 0.4])])
    res = mc_expected_signature(LevySampler(tr, 1.0, 500), args.paths, seed=args.seed, N=3)
    kappa, se = mc_signature_cumulant(res)
    out.writerows(rows("levy", kappa, se, levy_cumulant(tr, 0.0, 1.0, 3)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
