"""Observation filtrations and regression estimators of E[. | G_t].

Three information structures are supported: full (G_t = F_t), trivial
(G_t = {0, Omega}) and a fixed delay (G_t = F_{(t - delta)^+}).  Conditional
expectations given F_s on the grid are least-squares projections onto
polynomials in the noise levels at time s: the d Brownian components, the
Gaussian part sigma W_L of the Levy process and the Teugel martingales
H^1..H^K.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .paths import PathBundle, TimeGrid, cumulative
from .teugel import TeugelIncrements

log = logging.getLogger(__name__)

RCOND = 1e-10
CACHE_BUDGET = 40_000_000  # float64 elements kept in cached regression designs


@dataclass(frozen=True)
class InfoStructure:
    kind: str = "full"
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("full", "trivial", "delayed"):
            raise ValueError(f"unknown information structure {self.kind!r}")
        if not self.delta >= 0:
            raise ValueError("delay must be nonnegative")

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def trivial(cls):
        return cls("trivial")

    @classmethod
    def delayed(cls, delta):
        return cls("delayed", float(delta))

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("type", "full"), float(d.get("delta", 0.0)))

    def to_dict(self):
        out = {"type": self.kind}
        if self.kind == "delayed":
            out["delta"] = self.delta
        return out

    def observed_index(self, k: int, grid: TimeGrid) -> int:
        """Grid index of the latest information available at t_k."""
        if self.kind == "full":
            return k
        if self.kind == "trivial":
            return 0
        return max(0, math.floor((k * grid.dt - self.delta) / grid.dt + 1e-9))


@dataclass(frozen=True)
class RegressionConfig:
    """Polynomial regression basis: total degree <= ``degree`` in the noise levels.

    ``degree = 0`` (intercept only) is accepted for misspecification
    diagnostics.
    """

    degree: int = 2
    ridge: float = 0.0

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("regression degree must be >= 0")
        if not self.ridge >= 0:
            raise ValueError("ridge must be >= 0")

    @classmethod
    def from_dict(cls, d):
        return cls(int(d.get("degree", 2)), float(d.get("ridge", 0.0)))


def monomials(X: np.ndarray, degree: int) -> np.ndarray:
    """Design matrix of all monomials of total degree <= degree (intercept first)."""
    P, F = X.shape
    cols = [np.ones(P)]
    for deg in range(1, degree + 1):
        for idx in combinations_with_replacement(range(F), deg):
            col = X[:, idx[0]].copy()
            for i in idx[1:]:
                col *= X[:, i]
            cols.append(col)
    return np.column_stack(cols)


class Projector:
    """Least-squares projection onto a fixed regression design.

    The design is orthonormalized once by SVD; rank-deficient designs keep the
    leading singular directions (minimum-norm least squares).
    """

    def __init__(self, X: np.ndarray | None, ridge: float = 0.0):
        self.X = X
        self.ridge = ridge
        self.rank_deficient = False
        if X is None:
            return
        if ridge > 0:
            P, F = X.shape
            pen = ridge * P * np.eye(F)
            pen[0, 0] = 0.0
            self._gram = X.T @ X + pen
            return
        U, s, _ = np.linalg.svd(X, full_matrices=False)
        keep = s > RCOND * s[0]
        self.rank_deficient = not bool(np.all(keep))
        self.U = U[:, keep]

    @property
    def is_mean(self) -> bool:
        return self.X is None

    def apply(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if self.X is None:
            return np.broadcast_to(Y.mean(axis=0), Y.shape).copy()
        if self.ridge > 0:
            beta = np.linalg.solve(self._gram, self.X.T @ Y)
            return self.X @ beta
        return self.U @ (self.U.T @ Y)


def mean_projector() -> Projector:
    return Projector(None)


class NoiseFeatures:
    """Noise levels on the grid plus the increments the solvers consume."""

    def __init__(self, bundle: PathBundle, incs: TeugelIncrements, basis=None):
        if incs.dH.shape[:2] != bundle.dW.shape[:2]:
            raise ValueError("Teugel increments do not match the bundle")
        self.bundle = bundle
        self.basis = basis
        self.grid = bundle.grid
        self.dW = bundle.dW
        self.dH = incs.dH
        self.W = cumulative(bundle.dW)
        self.WL = cumulative(bundle.sigma * bundle.dW_L)
        self.H = cumulative(incs.dH)
        self.levels = np.concatenate([self.W, self.WL[:, :, None], self.H], axis=2)
        self._cache = {}
        self._cached = 0
        self.warned_rank = False

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def d(self) -> int:
        return self.dW.shape[2]

    @property
    def K(self) -> int:
        return self.dH.shape[2]

    def design(self, j: int, degree: int) -> np.ndarray | None:
        """Regression design at grid index j; None when only constants are measurable."""
        if j == 0 or degree == 0:
            return None
        X = self.levels[:, j, :]
        sd = X.std(axis=0)
        live = sd > 0
        if not np.any(live):
            return None
        Z = (X[:, live] - X[:, live].mean(axis=0)) / sd[live]
        return monomials(Z, degree)

    def projector(self, j: int, cfg: RegressionConfig) -> Projector:
        key = (j, cfg.degree, cfg.ridge)
        if key in self._cache:
            return self._cache[key]
        X = self.design(j, cfg.degree)
        if X is None:
            return mean_projector()
        pr = Projector(X, cfg.ridge)
        if pr.rank_deficient:
            log.debug("rank-deficient regression design at index %d; using minimum-norm fit", j)
        size = 2 * X.size
        if self._cached + size <= CACHE_BUDGET:
            self._cache[key] = pr
            self._cached += size
        return pr


def _as_2d(values):
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("conditional expectation inputs contain NaN or inf")
    return v.reshape(v.shape[0], -1), v.shape


def cond_exp(values, info: InfoStructure, feats: NoiseFeatures, k: int,
             cfg: RegressionConfig = RegressionConfig()) -> np.ndarray:
    """Estimate E[values | G_{t_k}] path by path.

    ``values`` has leading axis over paths; trailing axes are kept.  Under full
    information the values are assumed F_{t_k}-measurable and returned as is.
    """
    flat, shape = _as_2d(values)
    if info.kind == "full":
        return flat.reshape(shape).copy()
    j = info.observed_index(k, feats.grid)
    pr = mean_projector() if j == 0 else feats.projector(j, cfg)
    return pr.apply(flat).reshape(shape)


@dataclass
class AdaptednessReport:
    adapted: bool
    worst_r2: float
    worst_spread: float
    failing_steps: list

    def __bool__(self):
        return self.adapted


def is_adapted(process, info: InfoStructure, feats: NoiseFeatures,
               cfg: RegressionConfig = RegressionConfig(), r2_tol: float = 1e-6,
               const_tol: float = 1e-10) -> AdaptednessReport:
    """Audit that ``process[:, k, ...]`` is G_{t_k}-measurable on the grid.

    Full information cannot be audited beyond F_t measurability and always
    passes.  Constant-information steps require path-constant values; delayed
    steps require a regression fit with R^2 >= 1 - r2_tol.
    """
    proc = np.asarray(process, dtype=float)
    if not np.all(np.isfinite(proc)):
        raise ValueError("process contains NaN or inf")
    if info.kind == "full":
        return AdaptednessReport(True, 1.0, 0.0, [])
    worst_r2, worst_spread, failing = 1.0, 0.0, []
    for k in range(proc.shape[1]):
        v = proc[:, k].reshape(proc.shape[0], -1)
        j = info.observed_index(k, feats.grid)
        pr = mean_projector() if j == 0 else feats.projector(j, cfg)
        if pr.is_mean:
            spread = float(np.max(v.max(axis=0) - v.min(axis=0)))
            worst_spread = max(worst_spread, spread)
            if spread > const_tol * max(1.0, float(np.max(np.abs(v)))):
                failing.append(k)
            continue
        fit = pr.apply(v)
        ss_res = float(np.sum((v - fit) ** 2))
        ss_tot = float(np.sum((v - v.mean(axis=0)) ** 2))
        r2 = 1.0 if ss_tot <= 1e-300 or ss_res <= 1e-24 * ss_tot else 1.0 - ss_res / ss_tot
        worst_r2 = min(worst_r2, r2)
        if r2 < 1.0 - r2_tol:
            failing.append(k)
    return AdaptednessReport(not failing, worst_r2, worst_spread, failing)
