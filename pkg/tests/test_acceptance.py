"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary (or on
stdout when this file is run as a script).
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

import conftest
from benchmarks import EXP, TWO_ATOM, features, scalar_lq
from levygame import (DriverSpec, InfoStructure, RegressionConfig, TerminalSpec, TimeGrid, gram_matrix,
                      lq_optimal_controls, lq_solve, orthonormalize, solve_adjoint_forward, solve_backward,
                      verify_minimax, verify_saddle, verify_stationarity)
from levygame import cli
from levygame.config import load_config
from levygame.teugel import basis_for, bracket_test_chunked

ROOT = Path(__file__).parents[1]
FULL, TRIVIAL = InfoStructure.full(), InfoStructure.trivial()


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def zeros(f, m=1):
    return np.zeros((f.n_paths, f.grid.N, m))


@pytest.fixture(scope="module")
def benchmark_runs():
    grid, f = features(N=100, P=10_000, seed=2024)
    lq = scalar_lq(grid)
    return {info.kind: lq_solve(lq, EXP, grid, f.n_paths, 2024, info, feats=f) for info in (FULL, TRIVIAL)}


def test_c1_orthonormality():
    worst = 0.0
    for trip, K in ((TWO_ATOM, 2), (EXP, 4)):
        basis = orthonormalize(gram_matrix(trip, K), K)
        worst = max(worst, float(np.max(np.abs(basis.c @ basis.G @ basis.c.T - np.eye(K)))))
    record(1, "orthonormality |cGc' - I|_max <= 1e-10", worst <= 1e-10, f"max residual {worst:.2e}")


def test_c2_bracket_identity():
    grid = TimeGrid(1.0, 200)
    res = bracket_test_chunked(EXP, basis_for(EXP, 3), grid, 100_000, seed=7)
    z = float(np.max(res.z_scores()))
    record(2, "bracket <H^i,H^j>(T) = delta_ij T within 3 SE", res.within(3.0), f"max |z| {z:.2f}")


def test_c3_bsde_oracles():
    grid, f = features(N=100, P=10_000, seed=31)
    u = zeros(f)
    zero = DriverSpec(lambda t, y, *_: np.zeros_like(y))
    const = solve_backward(zero, TerminalSpec.affine([5.0]), u, u, f)
    err_a = float(max(np.max(np.abs(const.y - 5.0)), np.max(np.abs(const.q)), np.max(np.abs(const.z))))

    errs = {}
    for N in (100, 200):
        g, fN = features(N=N, P=100, seed=31, K=1)
        uN = zeros(fN)
        sol = solve_backward(DriverSpec(lambda t, y, *_: 0.5 * y), TerminalSpec.affine([1.0]), uN, uN, fN)
        errs[N] = float(np.max(np.abs(sol.y[:, :, 0] - np.exp(0.5 * (1.0 - g.times)))))
    ratio = errs[100] / errs[200]

    bm = solve_backward(zero, TerminalSpec.affine([0.0], W=[[1.0]]), u, u, f, RegressionConfig(degree=1))
    qbar = bm.q[:, :, 0, 0].mean(axis=0)
    worst_z = float(np.max(np.abs(qbar - 1.0) / bm.q_se[:, 0, 0]))

    ok = err_a <= 1e-8 and errs[100] <= 0.02 and 1.4 <= ratio <= 2.6 and worst_z <= 3.0
    record(3, "BSDE oracles (constant, linear driver, Brownian terminal)", ok,
           f"const err {err_a:.1e}; linear err N=100 {errs[100]:.2e}, halving ratio {ratio:.3f}; "
           f"q max |z| {worst_z:.2f}")


def test_c4_adjoint_mean():
    grid, f = features(N=200, P=10_000, seed=4)
    lq = scalar_lq(grid, A=1.0, E=0.0, M=1.0, F=0.0, G=0.0)
    u = zeros(f)
    adj = solve_adjoint_forward(lq.hamiltonian_spec(), None, u, u, f, lq.phi_y, n=1)
    gap = np.abs(adj.mean()[:, 0] + np.exp(grid.times))
    bound = 3 * adj.stderr()[:, 0] + 5 * grid.dt
    record(4, "adjoint mean = -exp(t) within 3 SE + 5 dt", bool(np.all(gap <= bound)),
           f"max gap {gap.max():.3e} vs smallest bound {bound.min():.3e}")


def test_c5_stationarity(benchmark_runs):
    full, triv = benchmark_runs["full"], benchmark_runs["trivial"]
    sf = verify_stationarity(full.problem, full.u1, full.u2, full.adjoint, full.state)
    st = verify_stationarity(triv.problem, triv.u1, triv.u2, triv.adjoint, triv.state)
    ok = sf.max_norm <= 1e-8 and st.within_se(3.0)
    record(5, "stationarity (Full <= 1e-8, Trivial <= 3 SE)", ok,
           f"full {sf.max_norm:.1e}; trivial {st.max_norm:.1e} vs max SE {max(st.se1.max(), st.se2.max()):.1e}")


def test_c6_saddle(benchmark_runs):
    res = benchmark_runs["full"]
    rep = verify_saddle(res.problem, res.u1, res.u2, epsilons=(0.1, 0.2, 0.4), n_se=3.0)
    const = [r for r in rep.rows if r["direction"].startswith("const")]
    ratios = [r["quadratic_ratio"] for r in const]
    ok = all(r["ok"] for r in const) and all(abs(x - 1.0) <= 0.15 for x in ratios)
    record(6, "saddle inequalities with CRN, quadratic ratios within 15%", ok,
           f"{len(const)} rows, ratios {min(ratios):.3f}..{max(ratios):.3f}")


def test_c7_minimax(benchmark_runs):
    res = benchmark_runs["full"]
    rep = verify_minimax(res.problem, res.u1, res.u2, res.adjoint, res.state, mode="analytic")
    dev = max(rep.max_dev_u1, rep.max_dev_u2)
    record(7, "conditional minimax analytic check to 1e-10", rep.mode == "analytic" and dev <= 1e-10,
           f"max deviation {dev:.1e}")


def test_c8_information_limits():
    cfg = load_config(ROOT / "configs" / "lq_affine.json")
    lq = cli.lq_from_config(cfg)
    grid, f = features(N=cfg.grid.N, P=cfg.paths, seed=cfg.seed)
    reg = RegressionConfig(degree=1)
    full = lq_solve(lq, EXP, grid, f.n_paths, cfg.seed, FULL, reg, feats=f)
    d0 = lq_optimal_controls(full.lq, full.adjoint, InfoStructure.delayed(0.0), f, reg)
    dev = float(max(np.max(np.abs(d0[0] - full.u1)), np.max(np.abs(d0[1] - full.u2))))

    lq_b = scalar_lq(grid)
    late = lq_solve(lq_b, EXP, grid, f.n_paths, cfg.seed, InfoStructure.delayed(grid.T), feats=f)
    triv = lq_solve(lq_b, EXP, grid, f.n_paths, cfg.seed, TRIVIAL, feats=f)
    bitwise = late.u1.tobytes() == triv.u1.tobytes() and late.u2.tobytes() == triv.u2.tobytes()
    record(8, "Delayed(0) = Full to 1e-6 and Delayed(T) = Trivial bitwise", dev <= 1e-6 and bitwise,
           f"delay-0 deviation {dev:.1e}; bitwise {bitwise}")


def test_c9_determinism(tmp_path):
    cfg = load_config(ROOT / "configs" / "lq_scalar.json")
    for run in ("a", "b"):
        cli.run(cfg, "solve-lq", tmp_path / run)
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in csvs)
    record(9, "solve-lq CSV outputs byte-identical across runs", same and len(csvs) >= 2,
           f"compared {', '.join(csvs)}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
