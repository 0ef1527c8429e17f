"""Command-line runner: ``levygame <command> --config problem.json``.

Commands: orthonormalize, simulate, solve-lq, verify-saddle, bsde-convergence,
report.  Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a verification check outside tolerance.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import bsde, game, paths as paths_mod, teugel
from .config import ProblemConfig, load_config
from .errors import ConfigError, DivergenceError, RankDeficiencyError, ResourceError
from .info import RegressionConfig
from .levy import effective_order, gram_matrix, validate

log = logging.getLogger("levygame")

COMMANDS = ("orthonormalize", "simulate", "solve-lq", "verify-saddle", "bsde-convergence")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class VerificationFailed(Exception):
    pass


class StageFailure(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"{stage}: {exc}")


# Custom problems: name -> builder(config, feats) returning
# (GameProblem, u1, u2, AdjointSolution, BSDESolution).
CUSTOM_PROBLEMS: dict[str, Callable] = {}


def register_problem(name):
    def deco(fn):
        CUSTOM_PROBLEMS[name] = fn
        return fn
    return deco


def lq_from_config(cfg: ProblemConfig) -> game.LQSpec:
    a = cfg.lq_arrays()
    return game.LQSpec.build(cfg.grid, a["A"], a["B"], a["C"], a["D1"], a["D2"], a["E"], a["F"],
                             a["G"], a["M"], a["N1"], a["N2"], a["xi_const"], a["xi_W"], a["xi_H"])


@register_problem("lq_fd")
def _lq_finite_difference(cfg: ProblemConfig, feats):
    """The LQ game treated as a generic problem: finite-difference Hamiltonian
    gradients and a state-dependent adjoint solve."""
    lq = lq_from_config(cfg).restrict_order(feats.K)
    prob = lq.problem(feats, cfg.info, cfg.regression, mode="fd")
    P, N = feats.n_paths, cfg.grid.N
    z1, z2 = np.zeros((P, N, lq.m1)), np.zeros((P, N, lq.m2))
    state0 = prob.solve(z1, z2)
    adj = game.solve_adjoint_forward(prob.ham, state0, z1, z2, feats, lq.phi_y)
    u1, u2 = game.lq_optimal_controls(lq, adj, cfg.info, feats, cfg.regression)
    return prob, u1, u2, adj, prob.solve(u1, u2)


# --------------------------------------------------------------------------
# output helpers

def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else v for v in r])


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ConfigError, StageFailure):
        raise
    except Exception as e:
        raise StageFailure(getattr(e, "stage", name), e) from e


def _controls_rows(grid, u1, u2):
    rows = []
    t = grid.times
    for k in range(grid.N):
        rows.append([float(t[k])] + u1[:, k].mean(axis=0).tolist() + u1[:, k].std(axis=0).tolist()
                    + u2[:, k].mean(axis=0).tolist() + u2[:, k].std(axis=0).tolist())
    m1, m2 = u1.shape[2], u2.shape[2]
    header = (["t"] + [f"u1_mean_{j + 1}" for j in range(m1)] + [f"u1_sd_{j + 1}" for j in range(m1)]
              + [f"u2_mean_{j + 1}" for j in range(m2)] + [f"u2_sd_{j + 1}" for j in range(m2)])
    return header, rows


def _adjoint_rows(grid, adj):
    mean, se = adj.mean(), adj.stderr()
    n = mean.shape[1]
    header = ["t"] + [f"k_mean_{a + 1}" for a in range(n)] + [f"k_se_{a + 1}" for a in range(n)]
    rows = [[float(t)] + mean[i].tolist() + se[i].tolist() for i, t in enumerate(grid.times)]
    return header, rows


def linear_driver_oracle(cfg: ProblemConfig, steps: int, r: float = 0.5, c: float = 1.0, paths: int = 16):
    """Max error of the scheme for f = r y, xi = c against c exp(r (T - t))."""
    grid = paths_mod.TimeGrid(cfg.grid.T, steps)
    feats = game.prepare_noise(cfg.levy, grid, cfg.dims["d"], 1, paths, cfg.seed)
    driver = bsde.DriverSpec(lambda t, y, q, z, u1, u2: r * y)
    term = bsde.TerminalSpec.affine([c])
    z = np.zeros((paths, steps, 1))
    sol = bsde.solve_backward(driver, term, z, z, feats, RegressionConfig(0))
    exact = c * np.exp(r * (grid.T - grid.times))
    return float(np.max(np.abs(sol.y[:, :, 0] - exact[None, :])))


# --------------------------------------------------------------------------
# commands

def cmd_orthonormalize(cfg, out: Path, manifest):
    G = gram_matrix(cfg.levy, cfg.K)
    k_eff = effective_order(G)
    basis = _stage("orthonormalize", teugel.orthonormalize, G, k_eff)
    payload = {"K_requested": cfg.K, "K": basis.K, "c": basis.c, "G": basis.G,
               "residual": basis.residual(), "diagnostics": validate(cfg.levy, cfg.K)}
    print(json.dumps({"c": basis.c.tolist(), "residual": basis.residual(), "K": basis.K},
                     default=_json_default))
    manifest["K_used"] = basis.K
    _write_json(out / "orthonormalize.json", payload)
    manifest["files"].append("orthonormalize.json")
    manifest["results"] = {"residual": basis.residual(), "K": basis.K}


def cmd_simulate(cfg, out: Path, manifest):
    basis = _stage("orthonormalize", teugel.basis_for, cfg.levy, cfg.K)
    manifest["K_used"] = basis.K
    bundle = _stage("simulate", paths_mod.simulate, cfg.levy, cfg.grid, cfg.dims["d"], basis.K,
                    cfg.paths, cfg.seed)
    incs = teugel.increments(bundle, basis)
    summary = {"jump_count_mean": float(bundle.jump_counts().mean()), "paths": bundle.n_paths,
               "mean_Y_T": [], "se_Y_T": []}
    for j in range(1, basis.K + 1):
        m, se = paths_mod.empirical_mean_Y(bundle, j)
        summary["mean_Y_T"].append(float(m[-1]))
        summary["se_Y_T"].append(float(se[-1]))
    if bundle.n_paths >= 100:
        br = teugel.bracket_test(incs, cfg.grid)
        summary["bracket"] = br.estimate
        summary["bracket_se"] = br.stderr
        summary["bracket_within_3se"] = br.within(3.0)
    if "csv" in cfg.formats:
        paths_mod.write_csv(bundle, out / "paths.csv")
        manifest["files"].append("paths.csv")
    _write_json(out / "simulate.json", summary)
    manifest["files"].append("simulate.json")
    manifest["results"] = {"jump_count_mean": summary["jump_count_mean"]}


def _solve(cfg: ProblemConfig):
    """Shared pipeline for solve-lq and verify-saddle."""
    if cfg.problem["kind"] == "lq":
        lq = _stage("config", lq_from_config, cfg)
        feats = _stage("simulate", game.prepare_noise, cfg.levy, cfg.grid, lq.d, lq.K, cfg.paths, cfg.seed)
        res = _stage("solve", game.lq_solve, lq, cfg.levy, cfg.grid, cfg.paths, cfg.seed, cfg.info,
                     cfg.regression, feats=feats)
        return res.problem, res.u1, res.u2, res.adjoint, res.state, feats
    name = cfg.problem.get("name")
    if name not in CUSTOM_PROBLEMS:
        raise ConfigError([("problem.name", f"no registered problem named {name!r}")])
    feats = _stage("simulate", game.prepare_noise, cfg.levy, cfg.grid, cfg.dims["d"], cfg.K,
                   cfg.paths, cfg.seed)
    prob, u1, u2, adj, state = _stage("solve", CUSTOM_PROBLEMS[name], cfg, feats)
    return prob, u1, u2, adj, state, feats


def _emit_solution(cfg, out, manifest, prob, u1, u2, adj, state, feats):
    costs = prob.costs(u1, u2, state)
    J = float(costs.mean())
    se = float(costs.std(ddof=1) / math.sqrt(len(costs))) if len(costs) > 1 else 0.0
    h, rows = _controls_rows(cfg.grid, u1, u2)
    _write_csv(out / "controls.csv", h, rows)
    h, rows = _adjoint_rows(cfg.grid, adj)
    _write_csv(out / "adjoint.csv", h, rows)
    stat = _stage("stationarity", game.verify_stationarity, prob, u1, u2, adj, state, cfg.n_se)
    _write_json(out / "cost.json", {"J": J, "stderr": se, "K": feats.K, "paths": feats.n_paths,
                                    "steps": cfg.grid.N, "info": cfg.info.to_dict()})
    _write_json(out / "stationarity.json", stat.to_dict())
    manifest["files"] += ["controls.csv", "adjoint.csv", "cost.json", "stationarity.json"]
    manifest["K_used"] = feats.K
    manifest["results"] = {"J": J, "J_se": se, "stationarity_passed": stat.passed,
                           "oracle_error": linear_driver_oracle(cfg, cfg.grid.N)}
    return stat


def cmd_solve_lq(cfg, out: Path, manifest):
    if cfg.problem["kind"] != "lq":
        raise ConfigError([("problem.kind", "solve-lq requires an LQ problem")])
    prob, u1, u2, adj, state, feats = _solve(cfg)
    _emit_solution(cfg, out, manifest, prob, u1, u2, adj, state, feats)


def cmd_verify_saddle(cfg, out: Path, manifest):
    prob, u1, u2, adj, state, feats = _solve(cfg)
    stat = _emit_solution(cfg, out, manifest, prob, u1, u2, adj, state, feats)
    rep = _stage("saddle", game.verify_saddle, prob, u1, u2, None, cfg.epsilons, cfg.n_se)
    mm = _stage("minimax", game.verify_minimax, prob, u1, u2, adj, state)
    _write_json(out / "saddle.json", rep.to_dict())
    _write_json(out / "minimax.json", mm.to_dict())
    manifest["files"] += ["saddle.json", "minimax.json"]
    manifest["results"].update({"saddle_passed": rep.passed, "ratios_within_15pct": rep.ratios_within(0.15),
                                "minimax_passed": mm.passed()})
    failed = [name for name, ok in (("saddle", rep.passed), ("stationarity", stat.passed),
                                    ("minimax", mm.passed())) if not ok]
    if failed:
        raise VerificationFailed(", ".join(failed))


def cmd_bsde_convergence(cfg, out: Path, manifest):
    conv = cfg.convergence
    steps_list = conv.get("steps_list", [25, 50, 100, 200])
    r, c = float(conv.get("r", 0.5)), float(conv.get("c", 1.0))
    rows, prev = [], None
    for N in steps_list:
        err = _stage("bsde", linear_driver_oracle, cfg, int(N), r, c)
        rate = "" if prev is None else _fmt(math.log(prev[1] / err) / math.log(N / prev[0]))
        rows.append([int(N), float(err), rate])
        prev = (N, err)
    _write_csv(out / "convergence.csv", ["N", "max_error", "rate"], rows)
    manifest["files"].append("convergence.csv")
    manifest["results"] = {"max_error": {str(n): e for n, e, _ in rows}}


HANDLERS = {
    "orthonormalize": cmd_orthonormalize,
    "simulate": cmd_simulate,
    "solve-lq": cmd_solve_lq,
    "verify-saddle": cmd_verify_saddle,
    "bsde-convergence": cmd_bsde_convergence,
}


def run(cfg: ProblemConfig, command: str, out_dir=None) -> dict:
    """Execute one command, write its artifacts and a manifest; return the manifest.

    The manifest is written even when the command fails; exceptions propagate
    after it is on disk.
    """
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config_hash": cfg.config_hash(), "family_hash": cfg.family_hash(),
                "seed": cfg.seed, "steps": cfg.grid.N, "paths": cfg.paths, "K_requested": cfg.K,
                "K_used": None, "files": [], "results": {}, "status": "running", "failed_stage": None}
    start = time.perf_counter()
    try:
        HANDLERS[command](cfg, out, manifest)
        manifest["status"] = "ok"
    except VerificationFailed as e:
        manifest["status"] = "verification_failed"
        manifest["failed_stage"] = str(e)
        raise
    except StageFailure as e:
        manifest["status"] = "failed"
        manifest["failed_stage"] = e.stage
        manifest["error"] = repr(e.exc)
        raise
    except Exception as e:
        manifest["status"] = "failed"
        manifest["failed_stage"] = getattr(e, "stage", command)
        manifest["error"] = repr(e)
        raise
    finally:
        manifest["wall_time"] = time.perf_counter() - start
        manifest["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        _write_json(out / "manifest.json", manifest)
    return manifest


class ReportError(ValueError):
    pass


def report(manifests: list[dict], out_path=None) -> list[dict]:
    """Tabulate J, oracle errors and convergence rates across compatible runs.

    Rows after the first are compared with the first: equal step counts give a
    consistency flag (|dJ| within 3 combined standard errors), different step
    counts give an observed error rate of the linear-driver oracle.
    """
    if not manifests:
        raise ReportError("no manifests given")
    fam = {m.get("family_hash") for m in manifests}
    if len(fam) != 1:
        raise ReportError("manifests come from different configurations (beyond seed/steps)")
    base = manifests[0]
    rows = []
    for i, m in enumerate(manifests):
        res = m.get("results", {})
        row = {"run": i, "seed": m["seed"], "steps": m["steps"], "paths": m["paths"],
               "J": res.get("J", ""), "J_se": res.get("J_se", ""), "oracle_error": res.get("oracle_error", "")}
        if len(manifests) > 1:
            row["consistent"] = ""
            row["error_rate"] = ""
            if i > 0:
                b = base.get("results", {})
                if m["steps"] == base["steps"] and "J" in res and "J" in b:
                    tol = 3.0 * math.hypot(res["J_se"], b["J_se"])
                    row["consistent"] = "consistent" if abs(res["J"] - b["J"]) <= tol else "inconsistent"
                elif m["steps"] != base["steps"] and res.get("oracle_error") and b.get("oracle_error"):
                    row["error_rate"] = math.log(b["oracle_error"] / res["oracle_error"]) / math.log(
                        m["steps"] / base["steps"])
        rows.append(row)
    if out_path is not None:
        header = list(rows[0].keys())
        _write_csv(Path(out_path), header, [[r[h] for h in header] for r in rows])
    return rows


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levygame", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON problem file")
        p.add_argument("--out", default=None, help="output directory (overrides outputs.directory)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
    p = sub.add_parser("report")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--out", default="report.csv", help="CSV file to write")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        try:
            ms = [json.loads(Path(p).read_text()) for p in args.manifests]
            rows = report(ms, args.out)
        except (OSError, json.JSONDecodeError, ReportError, KeyError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"wrote {args.out} ({len(rows)} runs)")
        return EXIT_OK
    try:
        cfg = load_config(args.config, seed=args.seed, paths=args.paths, steps=args.steps)
        manifest = run(cfg, args.command, args.out)
    except ConfigError as e:
        for path, msg in e.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailed as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except StageFailure as e:
        print(f"stage {e.stage} failed: {e.exc}", file=sys.stderr)
        numeric = (DivergenceError, RankDeficiencyError, ResourceError, np.linalg.LinAlgError,
                   FloatingPointError, ValueError)
        return EXIT_NUMERIC if isinstance(e.exc, numeric) else 1
    print(json.dumps({"status": manifest["status"], "files": manifest["files"],
                      "results": manifest["results"]}, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
