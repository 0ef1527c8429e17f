"""Quadratic saddle ratios dJ / (s eps^2 E int N v^2 dt) across seeds and information structures."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from benchmarks import EXP, features, scalar_lq  # noqa: E402
from levygame import InfoStructure, lq_solve, verify_saddle  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=5000)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.2, 0.4])
    args = ap.parse_args()

    infos = [InfoStructure.full(), InfoStructure.delayed(0.25), InfoStructure.trivial()]
    for seed in args.seeds:
        grid, f = features(N=args.steps, P=args.paths, seed=seed)
        for info in infos:
            res = lq_solve(scalar_lq(grid), EXP, grid, args.paths, seed, info, feats=f)
            rep = verify_saddle(res.problem, res.u1, res.u2, epsilons=args.eps)
            r = np.array(rep.ratios())
            label = info.kind if info.kind != "delayed" else f"delayed({info.delta:g})"
            print(f"seed={seed} {label:13s} J={rep.J:.4f} ratios {r.min():.3f}..{r.max():.3f} "
                  f"inequalities {'ok' if rep.passed else 'VIOLATED'}")


if __name__ == "__main__":
    main()
