"""Regression Monte Carlo for the controlled backward equation

    y(t) = xi + int_t^T f(s, y, q, z, u1, u2) ds - sum_i int_t^T q^i dW^i
              - sum_i int_t^T z^i dH^i

and for the cost J = E[int_0^T l(t, y, q, z, u1, u2) dt + phi(y(0))].

Array conventions (P paths, N steps): y (P, n), q (P, n, d), z (P, n, K),
u1 (P, m1), u2 (P, m2).  Controls are passed over the whole grid with shape
(P, N, m).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError
from .info import NoiseFeatures, RegressionConfig

log = logging.getLogger(__name__)


@dataclass
class DriverSpec:
    """Driver f(t, y, q, z, u1, u2) -> (P, n), vectorized over paths.

    Optional Jacobians use ``[p, a, ...]`` = d f_a / d(argument ...), e.g.
    ``f_q`` has shape (P, n, n, d).
    """

    f: Callable
    f_y: Optional[Callable] = None
    f_q: Optional[Callable] = None
    f_z: Optional[Callable] = None
    f_u1: Optional[Callable] = None
    f_u2: Optional[Callable] = None

    def has_jacobians(self) -> bool:
        return all(g is not None for g in (self.f_y, self.f_q, self.f_z, self.f_u1, self.f_u2))


@dataclass
class TerminalSpec:
    """Terminal value xi(features) -> (P, n) built from a path's noise record."""

    xi: Callable

    @classmethod
    def affine(cls, const, W=None, H=None):
        """xi = const + W_coef @ W(T) + H_coef @ H(T)."""
        const = np.atleast_1d(np.asarray(const, dtype=float))

        def xi(feats: NoiseFeatures):
            out = np.broadcast_to(const, (feats.n_paths, len(const))).copy()
            if W is not None:
                out += feats.W[:, -1, :] @ np.asarray(W, dtype=float).T
            if H is not None:
                Hc = np.asarray(H, dtype=float)[:, : feats.K]
                out += feats.H[:, -1, : Hc.shape[1]] @ Hc.T
            return out

        return cls(xi)


@dataclass
class CostSpec:
    """Running cost l(t, y, q, z, u1, u2) -> (P,) and terminal-in-time cost phi(y0) -> (P,).

    Gradients, when given, return arrays shaped like their argument.
    """

    l: Callable
    phi: Callable
    l_y: Optional[Callable] = None
    l_q: Optional[Callable] = None
    l_z: Optional[Callable] = None
    l_u1: Optional[Callable] = None
    l_u2: Optional[Callable] = None
    phi_y: Optional[Callable] = None

    def has_gradients(self) -> bool:
        return all(g is not None for g in (self.l_y, self.l_q, self.l_z, self.l_u1, self.l_u2))


@dataclass
class BSDESolution:
    y: np.ndarray       # (P, N+1, n)
    y_cond: np.ndarray  # (P, N, n), regression estimate of E[y_{k+1} | F_k]
    q: np.ndarray       # (P, N, n, d)
    z: np.ndarray       # (P, N, n, K)
    q_se: np.ndarray    # (N, n, d) standard error of the path-mean of q
    z_se: np.ndarray    # (N, n, K)
    meta: dict = field(default_factory=dict)
    f_sum: Optional[np.ndarray] = None  # (P, n) per-path sum_k f_k dt
    J: Optional[float] = None
    J_se: Optional[float] = None


def _increment_normalizer(dX: np.ndarray, dt: float) -> np.ndarray:
    """Inverse of the sample second moment of the increments, or I/dt when it is near singular.

    Heavy-tailed Teugel increments can push S far from dt I in a finite
    sample; the realized S is still the right normalizer then, so only a
    numerically singular S (e.g. no jumps at all in a step) triggers the
    fallback.
    """
    P, D = dX.shape
    if P > 4 * D:
        S = dX.T @ dX / P
        ev = np.linalg.eigvalsh(S)
        if ev.min() > 1e-8 * ev.max():
            return np.linalg.inv(S)
    return np.eye(D) / dt


def solve_backward(driver: DriverSpec, terminal: TerminalSpec, u1: np.ndarray, u2: np.ndarray,
                   feats: NoiseFeatures, cfg: RegressionConfig = RegressionConfig(),
                   bound: float = 1e8, xi: np.ndarray | None = None) -> BSDESolution:
    """Explicit backward Euler with regression estimates of the conditional moments.

    At step k, with hat-y = E[y_{k+1} | F_k] and dX = (dW_k, dH_k):
        (q_k, z_k) = E[(y_{k+1} - hat-y) dX^T | F_k] S^{-1}
        y_k        = hat-y + f(t_k, hat-y, q_k, z_k, u1_k, u2_k) dt
    where S = mean over paths of dX dX^T, an unbiased estimate of dt I.
    Subtracting hat-y and normalizing by the realized S instead of dt leave
    the targets unchanged and remove most of the sampling noise from q and z.
    """
    grid = feats.grid
    P, N, dt = feats.n_paths, grid.N, grid.dt
    d, K = feats.d, feats.K
    yT = np.asarray(terminal.xi(feats) if xi is None else xi, dtype=float)
    if yT.ndim == 1:
        yT = yT[:, None]
    n = yT.shape[1]
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape[:2] != (P, N) or u2.shape[:2] != (P, N):
        raise ValueError(f"controls must have shape ({P}, {N}, m)")

    y = np.empty((P, N + 1, n))
    y_cond = np.empty((P, N, n))
    q = np.empty((P, N, n, d))
    z = np.empty((P, N, n, K))
    q_se = np.empty((N, n, d))
    z_se = np.empty((N, n, K))
    y[:, N] = yT
    times = grid.times
    f_sum = np.zeros((P, n))
    deficient = 0
    for k in range(N - 1, -1, -1):
        pr = feats.projector(k, cfg)
        deficient += pr.rank_deficient
        yn = y[:, k + 1]
        yh = pr.apply(yn)
        dev = yn - yh
        dX = np.concatenate([feats.dW[:, k], feats.dH[:, k]], axis=1)
        Sinv = _increment_normalizer(dX, dt)
        raw = np.einsum("pa,pi,ij->paj", dev, dX, Sinv)
        fit = pr.apply(raw.reshape(P, -1)).reshape(P, n, d + K)
        q[:, k] = fit[:, :, :d]
        z[:, k] = fit[:, :, d:]
        if P > 1:
            se = raw.std(axis=0, ddof=1) / np.sqrt(P)
            q_se[k] = se[:, :d]
            z_se[k] = se[:, d:]
        else:
            q_se[k] = 0.0
            z_se[k] = 0.0
        y_cond[:, k] = yh
        fk = driver.f(times[k], yh, q[:, k], z[:, k], u1[:, k], u2[:, k]) * dt
        f_sum += fk
        y[:, k] = yh + fk
        top = float(np.max(np.abs(y[:, k]))) if y[:, k].size else 0.0
        if not np.isfinite(top) or top > bound:
            raise DivergenceError("backward state equation", k, top)
    if deficient and not feats.warned_rank:
        feats.warned_rank = True
        log.warning("%d of %d regression designs were rank deficient (minimum-norm fits used)",
                    deficient, N)
    return BSDESolution(y=y, y_cond=y_cond, q=q, z=z, q_se=q_se, z_se=z_se,
                        meta={"K": K, "degree": cfg.degree, "ridge": cfg.ridge, "steps": N}, f_sum=f_sum)


def _phi_grad(cost: CostSpec, y0: np.ndarray) -> np.ndarray:
    if cost.phi_y is not None:
        return np.asarray(cost.phi_y(y0), dtype=float).reshape(y0.shape)
    g = np.empty_like(y0)
    for a in range(y0.shape[1]):
        h = 1e-6 * max(1.0, float(np.max(np.abs(y0[:, a]))))
        e = np.zeros(y0.shape[1])
        e[a] = h
        g[:, a] = (cost.phi(y0 + e) - cost.phi(y0 - e)) / (2 * h)
    return g


def path_costs(cost: CostSpec, sol: BSDESolution, u1: np.ndarray, u2: np.ndarray,
               feats: NoiseFeatures) -> np.ndarray:
    """Per-path cost contributions whose mean is the estimate of J.

    The raw contribution is sum_k l(t_k, ...) dt + phi(y_0) (left-point rule).
    y_0 is itself a sample average: the scheme gives exactly
    mean(y_0) = mean(xi + sum_k f_k dt).  A centered first-order correction
    phi_y(y_0) . (xi + sum f dt - y_0) is added per path so that the sample
    spread also carries the Monte Carlo error of y_0; the mean is unchanged.
    """
    grid = feats.grid
    times = grid.times
    total = np.zeros(sol.y.shape[0])
    for k in range(grid.N):
        total += cost.l(times[k], sol.y[:, k], sol.q[:, k], sol.z[:, k], u1[:, k], u2[:, k])
    total *= grid.dt
    y0 = sol.y[:, 0]
    total += cost.phi(y0)
    if sol.f_sum is not None:
        corr = np.sum(_phi_grad(cost, y0) * (sol.y[:, -1] + sol.f_sum - y0), axis=1)
        total += corr - corr.mean()
    if not np.all(np.isfinite(total)):
        raise ValueError("cost evaluation produced NaN or inf")
    return total


def evaluate_cost(cost: CostSpec, sol: BSDESolution, u1, u2, feats: NoiseFeatures) -> tuple[float, float]:
    """Monte Carlo estimate of J with its standard error; also stored on ``sol``."""
    c = path_costs(cost, sol, np.asarray(u1, dtype=float), np.asarray(u2, dtype=float), feats)
    J = float(c.mean())
    se = float(c.std(ddof=1) / np.sqrt(len(c))) if len(c) > 1 else 0.0
    sol.J, sol.J_se = J, se
    return J, se


@dataclass
class ResidualReport:
    mean: np.ndarray       # (N, n) path-mean of the one-step residual
    mean_se: np.ndarray    # (N, n) from the spread of y_{k+1} - hat-y, see residual_audit
    mean_square: np.ndarray  # (N,) path-mean of |r_k|^2
    flagged: bool


def residual_audit(sol: BSDESolution, driver: DriverSpec, u1, u2, feats: NoiseFeatures,
                   flag_tol: float = 1e-6) -> ResidualReport:
    """One-step residual r_k = y_{k+1} - y_k + f dt - q dW - z dH.

    f is evaluated where the scheme evaluates it (at hat-y).  A large mean
    square flags a regression basis that cannot represent the solution.

    Because hat-y is centered in sample, the path-mean of r_k equals minus the
    path-mean of q dW + z dH; its standard error is therefore taken from the
    spread of the martingale increment y_{k+1} - hat-y rather than of r_k.
    """
    grid = feats.grid
    P, N, dt = sol.y.shape[0], grid.N, grid.dt
    times = grid.times
    n = sol.y.shape[2]
    mean = np.empty((N, n))
    mean_se = np.empty((N, n))
    ms = np.empty(N)
    for k in range(N):
        f = driver.f(times[k], sol.y_cond[:, k], sol.q[:, k], sol.z[:, k], u1[:, k], u2[:, k])
        r = (sol.y[:, k + 1] - sol.y[:, k] + f * dt
             - np.einsum("pai,pi->pa", sol.q[:, k], feats.dW[:, k])
             - np.einsum("pai,pi->pa", sol.z[:, k], feats.dH[:, k]))
        mean[k] = r.mean(axis=0)
        dev = sol.y[:, k + 1] - sol.y_cond[:, k]
        mean_se[k] = dev.std(axis=0, ddof=1) / np.sqrt(P) if P > 1 else 0.0
        ms[k] = float(np.mean(np.sum(r**2, axis=1)))
    return ResidualReport(mean, mean_se, ms, bool(np.max(ms) > flag_tol))
