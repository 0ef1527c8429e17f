"""Hamiltonian, adjoint equation, LQ game synthesis and maximum-principle checks.

The Hamiltonian is H(t, y, q, z, u1, u2, k) = <k, -f> + l.  The adjoint is the
forward equation

    dk = -H_y dt - sum_i H_{q^i} dW^i - sum_i H_{z^i} dH^i,   k(0) = -phi_y(y(0)),

integrated with a left-point Euler scheme.  Player 1 minimizes J, player 2
maximizes it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .bsde import BSDESolution, CostSpec, DriverSpec, TerminalSpec, path_costs, solve_backward
from .errors import DivergenceError
from .info import InfoStructure, NoiseFeatures, RegressionConfig, cond_exp, is_adapted
from .levy import LevyTriplet
from .paths import TimeGrid, simulate
from .teugel import OrthonormalBasis, basis_for, increments

log = logging.getLogger(__name__)


class Gradients(NamedTuple):
    H_y: np.ndarray   # (P, n)
    H_q: np.ndarray   # (P, n, d)
    H_z: np.ndarray   # (P, n, K)
    H_u1: np.ndarray  # (P, m1)
    H_u2: np.ndarray  # (P, m2)


@dataclass
class HamiltonianSpec:
    """H = <k, -f> + l with analytic or central finite-difference gradients.

    ``gradient`` (if given) returns a Gradients tuple directly.  Otherwise,
    analytic mode contracts the driver Jacobians and cost gradients, and
    ``mode="fd"`` differentiates H numerically with step h_rel * (1 + |x|).
    """

    driver: DriverSpec
    cost: CostSpec
    mode: str = "analytic"
    h_rel: float = 1e-5
    gradient: Optional[Callable] = None

    def __post_init__(self):
        if self.mode not in ("analytic", "fd"):
            raise ValueError(f"unknown gradient mode {self.mode!r}")
        if self.mode == "analytic" and self.gradient is None and not (
            self.driver.has_jacobians() and self.cost.has_gradients()
        ):
            raise ValueError("analytic mode needs driver Jacobians and cost gradients")


def hamiltonian(spec: HamiltonianSpec, t, y, q, z, u1, u2, k) -> np.ndarray:
    f = spec.driver.f(t, y, q, z, u1, u2)
    return -np.sum(np.asarray(k) * f, axis=-1) + spec.cost.l(t, y, q, z, u1, u2)


def _fd_gradients(spec, t, args, k, h_rel):
    out = []
    for pos, x in enumerate(args):
        x = np.asarray(x, dtype=float)
        P = x.shape[0]
        flat = x.reshape(P, -1)
        g = np.empty_like(flat)
        for c in range(flat.shape[1]):
            h = h_rel * (1.0 + np.abs(flat[:, c]))
            up, dn = flat.copy(), flat.copy()
            up[:, c] += h
            dn[:, c] -= h
            a_up = list(args)
            a_dn = list(args)
            a_up[pos] = up.reshape(x.shape)
            a_dn[pos] = dn.reshape(x.shape)
            g[:, c] = (hamiltonian(spec, t, *a_up, k) - hamiltonian(spec, t, *a_dn, k)) / (2 * h)
        out.append(g.reshape(x.shape))
    return Gradients(*out)


def hamiltonian_gradients(spec: HamiltonianSpec, t, y, q, z, u1, u2, k,
                          return_error: bool = False):
    """(H_y, H_q, H_z, H_u1, H_u2) at the given point.

    With ``return_error`` in finite-difference mode, also returns the largest
    change between steps h and h/2 as a truncation-error estimate.
    """
    args = (y, q, z, u1, u2)
    if spec.mode == "fd":
        g = _fd_gradients(spec, t, args, k, spec.h_rel)
        if return_error:
            g2 = _fd_gradients(spec, t, args, k, spec.h_rel / 2)
            err = max(float(np.max(np.abs(a - b))) if a.size else 0.0 for a, b in zip(g, g2))
            return g, err
        return g
    if spec.gradient is not None:
        g = Gradients(*spec.gradient(t, y, q, z, u1, u2, k))
    else:
        dr, co = spec.driver, spec.cost
        k = np.asarray(k)
        g = Gradients(
            -np.einsum("pa,pab->pb", k, dr.f_y(t, *args)) + co.l_y(t, *args),
            -np.einsum("pa,pabi->pbi", k, dr.f_q(t, *args)) + co.l_q(t, *args),
            -np.einsum("pa,pabi->pbi", k, dr.f_z(t, *args)) + co.l_z(t, *args),
            -np.einsum("pa,pab->pb", k, dr.f_u1(t, *args)) + co.l_u1(t, *args),
            -np.einsum("pa,pab->pb", k, dr.f_u2(t, *args)) + co.l_u2(t, *args),
        )
    return (g, 0.0) if return_error else g


@dataclass
class AdjointSolution:
    k: np.ndarray  # (P, N+1, n)

    def mean(self):
        return self.k.mean(axis=0)

    def stderr(self):
        P = self.k.shape[0]
        return self.k.std(axis=0, ddof=1) / np.sqrt(P) if P > 1 else np.zeros(self.k.shape[1:])


def solve_adjoint_forward(spec: HamiltonianSpec, state: BSDESolution | None, u1, u2,
                          feats: NoiseFeatures, phi_y: Callable, n: int | None = None,
                          bound: float = 1e8) -> AdjointSolution:
    """Euler scheme for the adjoint with coefficients at the left endpoint.

    ``state=None`` substitutes zeros for (y, q, z); valid when the gradients do
    not depend on the state, as in the LQ game.
    """
    grid = feats.grid
    P, N, dt, d, K = feats.n_paths, grid.N, grid.dt, feats.d, feats.K
    if state is None:
        if n is None:
            raise ValueError("state dimension n is required when state is None")
        y = np.zeros((P, N + 1, n))
        q = np.zeros((P, N, n, d))
        z = np.zeros((P, N, n, K))
    else:
        y, q, z = state.y, state.q, state.z
        n = y.shape[2]
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    times = grid.times
    k = np.empty((P, N + 1, n))
    k[:, 0] = -np.asarray(phi_y(y[:, 0]), dtype=float)
    for m in range(N):
        g = hamiltonian_gradients(spec, times[m], y[:, m], q[:, m], z[:, m], u1[:, m], u2[:, m], k[:, m])
        k[:, m + 1] = (k[:, m] - g.H_y * dt
                       - np.einsum("pai,pi->pa", g.H_q, feats.dW[:, m])
                       - np.einsum("pai,pi->pa", g.H_z, feats.dH[:, m]))
        top = float(np.max(np.abs(k[:, m + 1])))
        if not np.isfinite(top) or top > bound:
            raise DivergenceError("adjoint equation", m + 1, top)
    return AdjointSolution(k)


# --------------------------------------------------------------------------
# Linear-quadratic game

def _time_axis(a, base_ndim, N, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == base_ndim:
        return np.broadcast_to(a, (N,) + a.shape).copy()
    if a.ndim == base_ndim + 1 and a.shape[0] == N:
        return a.copy()
    raise ValueError(f"{name}: expected {base_ndim}-d constant or ({N}, ...) time-indexed array, got {a.shape}")


@dataclass
class LQSpec:
    """Coefficients of the LQ game, piecewise constant on an N-step grid.

    Shapes: A (N,n,n), B (N,d,n,n), C (N,K,n,n), D1 (N,n,m1), D2 (N,n,m2),
    E (N,n), F (N,d,n), G (N,K,n), N1 (N,m1,m1), N2 (N,m2,m2), M (n,).
    The terminal value is xi = xi_const + xi_W W(T) + xi_H H(T).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    M: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    xi_const: np.ndarray
    xi_W: np.ndarray
    xi_H: np.ndarray
    dt: float
    min_eig: float = field(init=False, default=0.0)

    def __post_init__(self):
        n = self.A.shape[1]
        steps, d, K = self.A.shape[0], self.B.shape[1], self.C.shape[1]
        for name, arr in (("N1", self.N1), ("N2", self.N2)):
            if not np.allclose(arr, np.swapaxes(arr, 1, 2), rtol=1e-12, atol=1e-14):
                raise ValueError(f"{name} must be symmetric")
            ev = np.linalg.eigvalsh(arr).min()
            if not ev > 0:
                raise ValueError(f"{name} must be uniformly positive definite (min eigenvalue {ev:.3g})")
        self.min_eig = float(min(np.linalg.eigvalsh(self.N1).min(), np.linalg.eigvalsh(self.N2).min()))
        checks = {
            "A": (self.A.shape, (steps, n, n)), "B": (self.B.shape, (steps, d, n, n)),
            "C": (self.C.shape, (steps, K, n, n)), "D1": (self.D1.shape[:2], (steps, n)),
            "D2": (self.D2.shape[:2], (steps, n)), "E": (self.E.shape, (steps, n)),
            "F": (self.F.shape, (steps, d, n)), "G": (self.G.shape, (steps, K, n)),
            "M": (self.M.shape, (n,)), "N1": (self.N1.shape, (steps, self.m1, self.m1)),
            "N2": (self.N2.shape, (steps, self.m2, self.m2)), "xi_const": (self.xi_const.shape, (n,)),
            "xi_W": (self.xi_W.shape, (n, d)), "xi_H": (self.xi_H.shape, (n, K)),
        }
        for name, (got, want) in checks.items():
            if got != want:
                raise ValueError(f"{name}: shape {got} inconsistent with {want}")
        for name in ("A", "B", "C", "D1", "D2", "E", "F", "G", "M", "N1", "N2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @classmethod
    def build(cls, grid: TimeGrid, A, B, C, D1, D2, E, F, G, M, N1, N2,
              xi_const, xi_W=None, xi_H=None) -> "LQSpec":
        """Broadcast constant coefficients over the grid (time-indexed ones pass through)."""
        N = grid.N
        A = _time_axis(A, 2, N, "A")
        n = A.shape[1]
        B = _time_axis(B, 3, N, "B")
        C = _time_axis(C, 3, N, "C")
        d, K = B.shape[1], C.shape[1]
        xi_W = np.zeros((n, d)) if xi_W is None else np.asarray(xi_W, dtype=float).reshape(n, d)
        xi_H = np.zeros((n, K)) if xi_H is None else np.asarray(xi_H, dtype=float).reshape(n, K)
        return cls(A=A, B=B, C=C, D1=_time_axis(D1, 2, N, "D1"), D2=_time_axis(D2, 2, N, "D2"),
                   E=_time_axis(E, 1, N, "E"), F=_time_axis(F, 2, N, "F"), G=_time_axis(G, 2, N, "G"),
                   M=np.asarray(M, dtype=float).reshape(n), N1=_time_axis(N1, 2, N, "N1"),
                   N2=_time_axis(N2, 2, N, "N2"), xi_const=np.asarray(xi_const, dtype=float).reshape(n),
                   xi_W=xi_W, xi_H=xi_H, dt=grid.dt)

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def d(self):
        return self.B.shape[1]

    @property
    def K(self):
        return self.C.shape[1]

    @property
    def m1(self):
        return self.D1.shape[2]

    @property
    def m2(self):
        return self.D2.shape[2]

    @property
    def steps(self):
        return self.A.shape[0]

    def restrict_order(self, K: int) -> "LQSpec":
        """Drop Teugel directions beyond K (when the driver has lower rank)."""
        if K > self.K:
            raise ValueError(f"cannot extend LQ coefficients from K={self.K} to {K}")
        if K == self.K:
            return self
        return LQSpec(A=self.A, B=self.B, C=self.C[:, :K], D1=self.D1, D2=self.D2, E=self.E, F=self.F,
                      G=self.G[:, :K], M=self.M, N1=self.N1, N2=self.N2, xi_const=self.xi_const,
                      xi_W=self.xi_W, xi_H=self.xi_H[:, :K], dt=self.dt)

    def index(self, t: float) -> int:
        return min(int(np.floor(t / self.dt + 1e-9)), self.steps - 1)

    # model callables ------------------------------------------------------
    def f(self, t, y, q, z, u1, u2):
        i = self.index(t)
        return (y @ self.A[i].T
                + np.einsum("jab,pbj->pa", self.B[i], q)
                + np.einsum("jab,pbj->pa", self.C[i], z)
                + u1 @ self.D1[i].T + u2 @ self.D2[i].T)

    def l(self, t, y, q, z, u1, u2):
        i = self.index(t)
        return (y @ self.E[i]
                + np.einsum("ja,paj->p", self.F[i], q)
                + np.einsum("ja,paj->p", self.G[i], z)
                + np.einsum("pa,ab,pb->p", u1, self.N1[i], u1)
                - np.einsum("pa,ab,pb->p", u2, self.N2[i], u2))

    def phi(self, y0):
        return y0 @ self.M

    def phi_y(self, y0):
        return np.broadcast_to(self.M, y0.shape).copy()

    def gradient(self, t, y, q, z, u1, u2, k):
        i = self.index(t)
        return Gradients(
            -k @ self.A[i] + self.E[i],
            np.einsum("jab,pa->pbj", -self.B[i], k) + self.F[i].T[None],
            np.einsum("jab,pa->pbj", -self.C[i], k) + self.G[i].T[None],
            -k @ self.D1[i] + 2 * u1 @ self.N1[i],
            -k @ self.D2[i] - 2 * u2 @ self.N2[i],
        )

    def driver(self) -> DriverSpec:
        n, d, K = self.n, self.d, self.K

        def f_y(t, y, *_):
            return np.broadcast_to(self.A[self.index(t)], (y.shape[0], n, n))

        def f_q(t, y, *_):
            return np.broadcast_to(np.transpose(self.B[self.index(t)], (1, 2, 0)), (y.shape[0], n, n, d))

        def f_z(t, y, *_):
            return np.broadcast_to(np.transpose(self.C[self.index(t)], (1, 2, 0)), (y.shape[0], n, n, K))

        def f_u1(t, y, *_):
            return np.broadcast_to(self.D1[self.index(t)], (y.shape[0], n, self.m1))

        def f_u2(t, y, *_):
            return np.broadcast_to(self.D2[self.index(t)], (y.shape[0], n, self.m2))

        return DriverSpec(self.f, f_y, f_q, f_z, f_u1, f_u2)

    def cost(self) -> CostSpec:
        def l_y(t, y, *_):
            return np.broadcast_to(self.E[self.index(t)], y.shape).copy()

        def l_q(t, y, q, *_):
            return np.broadcast_to(self.F[self.index(t)].T, q.shape).copy()

        def l_z(t, y, q, z, *_):
            return np.broadcast_to(self.G[self.index(t)].T, z.shape).copy()

        def l_u1(t, y, q, z, u1, u2):
            return 2 * u1 @ self.N1[self.index(t)]

        def l_u2(t, y, q, z, u1, u2):
            return -2 * u2 @ self.N2[self.index(t)]

        return CostSpec(self.l, self.phi, l_y, l_q, l_z, l_u1, l_u2, self.phi_y)

    def terminal(self) -> TerminalSpec:
        return TerminalSpec.affine(self.xi_const, self.xi_W, self.xi_H)

    def hamiltonian_spec(self, mode: str = "analytic") -> HamiltonianSpec:
        return HamiltonianSpec(self.driver(), self.cost(), mode=mode,
                               gradient=self.gradient if mode == "analytic" else None)

    def problem(self, feats: NoiseFeatures, info: InfoStructure,
                cfg: RegressionConfig = RegressionConfig(), mode: str = "analytic") -> "GameProblem":
        return GameProblem(driver=self.driver(), cost=self.cost(), terminal=self.terminal(),
                           ham=self.hamiltonian_spec(mode), feats=feats, info=info, cfg=cfg,
                           weights1=self.N1, weights2=self.N2)


@dataclass
class GameProblem:
    """Everything needed to re-solve the state equation and price a control pair.

    ``weights1``/``weights2`` are the quadratic control weights (N, m, m) used
    for the second-order ratio in verify_saddle; None skips the ratio.
    """

    driver: DriverSpec
    cost: CostSpec
    terminal: TerminalSpec
    ham: HamiltonianSpec
    feats: NoiseFeatures
    info: InfoStructure
    cfg: RegressionConfig = RegressionConfig()
    weights1: Optional[np.ndarray] = None
    weights2: Optional[np.ndarray] = None
    _xi: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def grid(self) -> TimeGrid:
        return self.feats.grid

    def xi(self) -> np.ndarray:
        if self._xi is None:
            self._xi = np.asarray(self.terminal.xi(self.feats), dtype=float)
        return self._xi

    def solve(self, u1, u2) -> BSDESolution:
        return solve_backward(self.driver, self.terminal, u1, u2, self.feats, self.cfg, xi=self.xi())

    def costs(self, u1, u2, sol: BSDESolution | None = None) -> np.ndarray:
        if sol is None:
            sol = self.solve(u1, u2)
        return path_costs(self.cost, sol, np.asarray(u1, dtype=float), np.asarray(u2, dtype=float), self.feats)


def lq_optimal_controls(lq: LQSpec, adj: AdjointSolution, info: InfoStructure, feats: NoiseFeatures,
                        cfg: RegressionConfig = RegressionConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Stationary points of the LQ Hamiltonian given the conditional adjoint:

        u1 = 1/2 N1^{-1} D1^T E[k | G_t],   u2 = -1/2 N2^{-1} D2^T E[k | G_t].
    """
    P, N = adj.k.shape[0], lq.steps
    u1 = np.empty((P, N, lq.m1))
    u2 = np.empty((P, N, lq.m2))
    for m in range(N):
        Ek = cond_exp(adj.k[:, m], info, feats, m, cfg)
        S1 = 0.5 * np.linalg.solve(lq.N1[m], lq.D1[m].T)
        S2 = -0.5 * np.linalg.solve(lq.N2[m], lq.D2[m].T)
        u1[:, m] = Ek @ S1.T
        u2[:, m] = Ek @ S2.T
    return u1, u2


@dataclass
class LQResult:
    u1: np.ndarray
    u2: np.ndarray
    state: BSDESolution
    adjoint: AdjointSolution
    J: float
    J_se: float
    lq: LQSpec
    basis: OrthonormalBasis
    feats: NoiseFeatures
    problem: GameProblem


def _staged(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except Exception as e:
        if not hasattr(e, "stage"):
            try:
                e.stage = stage
            except AttributeError:
                pass
        raise


def prepare_noise(triplet: LevyTriplet, grid: TimeGrid, d: int, K: int, n_paths: int, seed: int,
                  tol: float = 1e-12) -> NoiseFeatures:
    basis = _staged("orthonormalize", basis_for, triplet, K, tol)
    bundle = _staged("simulate", simulate, triplet, grid, d, basis.K, n_paths, seed)
    return NoiseFeatures(bundle, increments(bundle, basis), basis)


def lq_solve(lq: LQSpec, triplet: LevyTriplet, grid: TimeGrid, n_paths: int, seed: int,
             info: InfoStructure, cfg: RegressionConfig = RegressionConfig(),
             feats: NoiseFeatures | None = None) -> LQResult:
    """Simulate, integrate the (control-free) adjoint, synthesize controls, solve and price.

    Errors carry a ``stage`` attribute naming the failing step.
    """
    if feats is None:
        feats = prepare_noise(triplet, grid, lq.d, lq.K, n_paths, seed)
    basis = feats.basis
    lq = lq.restrict_order(feats.K)
    prob = lq.problem(feats, info, cfg)
    zeros1 = np.zeros((feats.n_paths, grid.N, lq.m1))
    zeros2 = np.zeros((feats.n_paths, grid.N, lq.m2))
    adj = _staged("adjoint", solve_adjoint_forward, prob.ham, None, zeros1, zeros2, feats, lq.phi_y, n=lq.n)
    u1, u2 = _staged("controls", lq_optimal_controls, lq, adj, info, feats, cfg)
    state = _staged("state", prob.solve, u1, u2)
    c = _staged("cost", prob.costs, u1, u2, state)
    J = float(c.mean())
    se = float(c.std(ddof=1) / np.sqrt(len(c))) if len(c) > 1 else 0.0
    state.J, state.J_se = J, se
    return LQResult(u1, u2, state, adj, J, se, lq, basis, feats, prob)


# --------------------------------------------------------------------------
# Verification of the maximum-principle conditions

@dataclass
class Direction:
    player: int
    name: str
    values: np.ndarray  # (P, N, m_player)


def default_directions(problem: GameProblem, m1: int, m2: int) -> list[Direction]:
    """Constant unit vectors of both signs for each player, plus sign(W^1(t)) under full information."""
    P, N = problem.feats.n_paths, problem.grid.N
    out = []
    for player, m in ((1, m1), (2, m2)):
        for j in range(m):
            v = np.zeros((P, N, m))
            v[:, :, j] = 1.0
            out.append(Direction(player, f"const_e{j + 1}", v))
            out.append(Direction(player, f"const_-e{j + 1}", -v))
        if problem.info.kind == "full":
            v = np.zeros((P, N, m))
            v[:, :, 0] = np.sign(problem.feats.W[:, :N, 0])
            out.append(Direction(player, "sign_W1", v))
    return out


@dataclass
class SaddleReport:
    J: float
    J_se: float
    rows: list
    n_se: float

    @property
    def passed(self) -> bool:
        return all(r["ok"] for r in self.rows)

    def ratios(self, player=None):
        return [r["quadratic_ratio"] for r in self.rows
                if r["quadratic_ratio"] is not None and (player is None or r["player"] == player)]

    def ratios_within(self, rel: float) -> bool:
        return all(abs(r - 1.0) <= rel for r in self.ratios())

    def to_dict(self) -> dict:
        return {"J": self.J, "J_se": self.J_se, "n_se": self.n_se, "passed": self.passed, "rows": self.rows}


def verify_saddle(problem: GameProblem, u1, u2, directions: Sequence[Direction] | None = None,
                  epsilons: Sequence[float] = (0.1, 0.2, 0.4), n_se: float = 3.0) -> SaddleReport:
    """Perturb each player's control along adapted directions with common noise.

    For player 1 the cost increase must be >= -n_se * stderr, for player 2 it
    must be <= +n_se * stderr.  With quadratic weights available, each row
    also reports dJ / (s eps^2 E int <N_i v, v> dt), s = +1 for player 1 and
    -1 for player 2, which tends to 1 for LQ games.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if directions is None:
        directions = default_directions(problem, u1.shape[2], u2.shape[2])
    for dvec in directions:
        want = u1.shape if dvec.player == 1 else u2.shape
        if dvec.values.shape != want:
            raise ValueError(f"direction {dvec.name} has shape {dvec.values.shape}, expected {want}")
        rep = is_adapted(dvec.values, problem.info, problem.feats, problem.cfg)
        if not rep.adapted:
            raise ValueError(f"direction {dvec.name} for player {dvec.player} is not adapted "
                             f"to the information structure (steps {rep.failing_steps[:5]})")
    base = problem.costs(u1, u2)
    P = len(base)
    J = float(base.mean())
    J_se = float(base.std(ddof=1) / np.sqrt(P)) if P > 1 else 0.0
    dt = problem.grid.dt
    rows = []
    for dvec in directions:
        v = dvec.values
        W = problem.weights1 if dvec.player == 1 else problem.weights2
        quad = None
        if W is not None:
            quad = float(np.mean(np.einsum("pka,kab,pkb->p", v, W, v)) * dt)
        for eps in epsilons:
            if dvec.player == 1:
                pert = problem.costs(u1 + eps * v, u2)
            else:
                pert = problem.costs(u1, u2 + eps * v)
            diff = pert - base
            dJ = float(diff.mean())
            se = float(diff.std(ddof=1) / np.sqrt(P)) if P > 1 else 0.0
            ok = dJ >= -n_se * se if dvec.player == 1 else dJ <= n_se * se
            sign = 1.0 if dvec.player == 1 else -1.0
            ratio = None
            if quad is not None and eps != 0 and quad > 0:
                ratio = dJ / (sign * eps**2 * quad)
            rows.append({"player": dvec.player, "direction": dvec.name, "eps": float(eps),
                         "J_perturbed": float(pert.mean()), "dJ": dJ, "stderr": se,
                         "quadratic_ratio": ratio, "ok": bool(ok)})
    return SaddleReport(J, J_se, rows, n_se)


def _path_gradients(problem: GameProblem, state: BSDESolution, u1, u2, adj: AdjointSolution, m: int):
    t = problem.grid.times[m]
    return hamiltonian_gradients(problem.ham, t, state.y[:, m], state.q[:, m], state.z[:, m],
                                 u1[:, m], u2[:, m], adj.k[:, m])


@dataclass
class StationarityReport:
    norm1: np.ndarray
    se1: np.ndarray
    norm2: np.ndarray
    se2: np.ndarray
    n_se: float = 3.0
    abs_tol: float = 1e-8

    @property
    def max_norm1(self) -> float:
        return float(self.norm1.max())

    @property
    def max_norm2(self) -> float:
        return float(self.norm2.max())

    @property
    def max_norm(self) -> float:
        return max(self.max_norm1, self.max_norm2)

    def within_se(self, n_se: float | None = None) -> bool:
        n_se = self.n_se if n_se is None else n_se
        return bool(np.all(self.norm1 <= n_se * self.se1 + self.abs_tol)
                    and np.all(self.norm2 <= n_se * self.se2 + self.abs_tol))

    @property
    def passed(self) -> bool:
        return self.within_se()

    def to_dict(self) -> dict:
        return {"max_norm_u1": self.max_norm1, "max_norm_u2": self.max_norm2,
                "max_se_u1": float(self.se1.max()), "max_se_u2": float(self.se2.max()),
                "passed": self.passed, "norm_u1": self.norm1.tolist(), "se_u1": self.se1.tolist(),
                "norm_u2": self.norm2.tolist(), "se_u2": self.se2.tolist()}


def verify_stationarity(problem: GameProblem, u1, u2, adj: AdjointSolution,
                        state: BSDESolution | None = None, n_se: float = 3.0,
                        abs_tol: float = 1e-8) -> StationarityReport:
    """Estimate |E[H_{u_i}(t) | G_t]| at every step for unconstrained controls.

    Per step the report holds the root-mean-square over paths of the
    conditional gradient norm, and as its standard error the dispersion of the
    raw gradient divided by sqrt(P).
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if state is None:
        state = problem.solve(u1, u2)
    P, N = u1.shape[0], problem.grid.N
    out = {1: (np.empty(N), np.empty(N)), 2: (np.empty(N), np.empty(N))}
    for m in range(N):
        g = _path_gradients(problem, state, u1, u2, adj, m)
        for i, raw in ((1, g.H_u1), (2, g.H_u2)):
            cg = cond_exp(raw, problem.info, problem.feats, m, problem.cfg)
            out[i][0][m] = np.sqrt(np.mean(np.sum(cg**2, axis=1)))
            out[i][1][m] = np.sqrt(np.sum(raw.var(axis=0, ddof=1)) / P) if P > 1 else 0.0
    return StationarityReport(out[1][0], out[1][1], out[2][0], out[2][1], n_se, abs_tol)


@dataclass
class MinimaxReport:
    mode: str
    max_dev_u1: float
    max_dev_u2: float
    violations: int
    checked: int
    t_indices: list

    def passed(self, tol: float = 1e-10) -> bool:
        if self.mode == "analytic":
            return self.max_dev_u1 <= tol and self.max_dev_u2 <= tol
        return self.violations == 0

    def to_dict(self):
        return {"mode": self.mode, "max_dev_u1": self.max_dev_u1, "max_dev_u2": self.max_dev_u2,
                "violations": self.violations, "checked": self.checked, "t_indices": self.t_indices}


def _hessian_in(problem, state, u1, u2, adj, m, player):
    """Hessian of H in one player's control by central differences of H_u.

    Unit steps make this exact for Hamiltonians quadratic in the controls.
    """
    u = u1 if player == 1 else u2
    P, dim = u.shape[0], u.shape[2]
    Hs = np.empty((P, dim, dim))
    for a in range(dim):
        up, dn = u.copy(), u.copy()
        up[:, m, a] += 1.0
        dn[:, m, a] -= 1.0
        if player == 1:
            gu = _path_gradients(problem, state, up, u2, adj, m).H_u1
            gd = _path_gradients(problem, state, dn, u2, adj, m).H_u1
        else:
            gu = _path_gradients(problem, state, u1, up, adj, m).H_u2
            gd = _path_gradients(problem, state, u1, dn, adj, m).H_u2
        Hs[:, :, a] = (gu - gd) / 2.0
    return Hs


def verify_minimax(problem: GameProblem, u1, u2, adj: AdjointSolution, state: BSDESolution | None = None,
                   t_indices: Sequence[int] | None = None, mode: str = "analytic",
                   u_grid1=None, u_grid2=None, tol: float = 1e-10) -> MinimaxReport:
    """Check that u1 minimizes and u2 maximizes E[H | G_t] pointwise in time.

    Analytic mode solves the conditional quadratic problem in each control and
    reports the distance to the candidate; it falls back to grid mode when the
    Hessian in u1 is not positive definite or the one in u2 not negative
    definite.  Grid mode evaluates E[H | G_t] on constant control values and
    counts paths where a grid value beats the candidate by more than ``tol``.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if state is None:
        state = problem.solve(u1, u2)
    N = problem.grid.N
    if t_indices is None:
        t_indices = sorted(set(np.linspace(0, N - 1, min(N, 11)).astype(int).tolist()))
    info, feats, cfg = problem.info, problem.feats, problem.cfg
    if mode == "analytic":
        dev1 = dev2 = 0.0
        for m in t_indices:
            Q1 = _hessian_in(problem, state, u1, u2, adj, m, 1)
            Q2 = _hessian_in(problem, state, u1, u2, adj, m, 2)
            if (np.linalg.eigvalsh(0.5 * (Q1 + np.swapaxes(Q1, 1, 2))).min() <= 0
                    or np.linalg.eigvalsh(0.5 * (Q2 + np.swapaxes(Q2, 1, 2))).max() >= 0):
                log.warning("Hamiltonian is not convex-concave in the controls; using grid mode")
                return verify_minimax(problem, u1, u2, adj, state, t_indices, "grid", u_grid1, u_grid2, tol)
            g = _path_gradients(problem, state, u1, u2, adj, m)
            for Q, raw, i in ((Q1, g.H_u1, 1), (Q2, g.H_u2, 2)):
                Eg = cond_exp(raw, info, feats, m, cfg)
                EQ = cond_exp(Q, info, feats, m, cfg)
                step = np.linalg.solve(EQ, Eg[:, :, None])[:, :, 0]
                dev = float(np.max(np.abs(step)))
                if i == 1:
                    dev1 = max(dev1, dev)
                else:
                    dev2 = max(dev2, dev)
        return MinimaxReport("analytic", dev1, dev2, 0, 0, list(map(int, t_indices)))

    def default_grid(dim):
        axis = np.linspace(-3.0, 3.0, 13)
        return np.array(list(product(axis, repeat=dim)))

    g1 = default_grid(u1.shape[2]) if u_grid1 is None else np.atleast_2d(np.asarray(u_grid1, dtype=float))
    g2 = default_grid(u2.shape[2]) if u_grid2 is None else np.atleast_2d(np.asarray(u_grid2, dtype=float))
    times = problem.grid.times
    violations = checked = 0
    for m in t_indices:
        y, q, z, k = state.y[:, m], state.q[:, m], state.z[:, m], adj.k[:, m]
        a1, a2 = u1[:, m], u2[:, m]
        H0 = cond_exp(hamiltonian(problem.ham, times[m], y, q, z, a1, a2, k), info, feats, m, cfg)
        scale = tol * (1.0 + np.abs(H0))
        for u in g1:
            alt = np.broadcast_to(u, a1.shape)
            Hu = cond_exp(hamiltonian(problem.ham, times[m], y, q, z, alt, a2, k), info, feats, m, cfg)
            violations += int(np.sum(Hu < H0 - scale))
            checked += len(Hu)
        for u in g2:
            alt = np.broadcast_to(u, a2.shape)
            Hu = cond_exp(hamiltonian(problem.ham, times[m], y, q, z, a1, alt, k), info, feats, m, cfg)
            violations += int(np.sum(Hu > H0 + scale))
            checked += len(Hu)
    return MinimaxReport("grid", float("nan"), float("nan"), violations, checked, list(map(int, t_indices)))
