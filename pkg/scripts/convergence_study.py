"""Time-step convergence of the scheme on the scalar LQ benchmark.

For each step count, solves the game under full and trivial information and
compares J with the closed-form value from the adjoint moment ODEs.
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from benchmarks import EXP, closed_form_cost, features, scalar_lq  # noqa: E402
from levygame import InfoStructure, lq_solve  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--steps", type=int, nargs="+", default=[25, 50, 100, 200])
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default="convergence_study.csv")
    args = ap.parse_args()

    rows = []
    for N in args.steps:
        grid, f = features(N=N, P=args.paths, seed=args.seed)
        for info in (InfoStructure.full(), InfoStructure.trivial()):
            res = lq_solve(scalar_lq(grid), EXP, grid, args.paths, args.seed, info, feats=f)
            ref = closed_form_cost(info.kind)
            rows.append([N, info.kind, res.J, res.J_se, ref, (res.J - ref) / res.J_se])
            print(f"N={N:4d} {info.kind:8s} J={res.J:.5f} +- {res.J_se:.5f}  closed form {ref:.5f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["steps", "info", "J", "J_se", "closed_form", "z"])
        for r in rows:
            w.writerow([r[0], r[1]] + [repr(float(x)) for x in r[2:]])
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
