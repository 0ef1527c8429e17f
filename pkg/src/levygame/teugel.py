"""Teugel martingales: orthonormalized compensated power-jump processes."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError
from .levy import LevyTriplet, cholesky_pivots, effective_order, gram_matrix, pivot_ok
from .paths import PathBundle, TimeGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrthonormalBasis:
    """Row i of ``c`` holds the coefficients of q_i(x) = sum_j c[i, j] x^j.

    ``c`` is lower triangular with positive diagonal and c G c^T = I.
    """

    c: np.ndarray
    G: np.ndarray

    @property
    def K(self) -> int:
        return self.c.shape[0]

    def residual(self) -> float:
        return float(np.max(np.abs(self.c @ self.G @ self.c.T - np.eye(self.K))))


def _inv_lower(L: np.ndarray) -> np.ndarray:
    K = L.shape[0]
    inv = np.zeros_like(L)
    for j in range(K):
        inv[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, K):
            inv[i, j] = -(L[i, j:i] @ inv[j:i, j]) / L[i, i]
    return inv


def orthonormalize(G: np.ndarray, K: int | None = None, tol: float = 1e-12) -> OrthonormalBasis:
    """Coefficients c = L^{-1} from the Cholesky factor G = L L^T.

    Raises RankDeficiencyError naming the first order whose pivot is <= tol.
    """
    G = np.asarray(G, dtype=float)
    if K is None:
        K = G.shape[0]
    if not 1 <= K <= G.shape[0]:
        raise ValueError(f"K = {K} outside 1..{G.shape[0]}")
    G = G[:K, :K]
    if not np.allclose(G, G.T, rtol=1e-12, atol=0):
        raise ValueError("Gram matrix must be symmetric")
    L, piv = cholesky_pivots(G)
    for i, p in enumerate(piv):
        if not pivot_ok(p, G[i, i], tol):
            raise RankDeficiencyError(i + 1, p)
    return OrthonormalBasis(c=_inv_lower(L), G=G.copy())


def basis_for(triplet: LevyTriplet, K: int, tol: float = 1e-12) -> OrthonormalBasis:
    """Orthonormal basis of order min(K, effective order), warning when capped."""
    G = gram_matrix(triplet, K)
    k_eff = effective_order(G, tol)
    if k_eff == 0:
        raise RankDeficiencyError(1, G[0, 0])
    if k_eff < K:
        log.warning("Teugel order capped from %d to %d (jump measure has low rank)", K, k_eff)
    return orthonormalize(G, k_eff, tol)


@dataclass
class TeugelIncrements:
    """dH[p, k, i-1] = sum_{j <= i} c[i, j] dY[p, k, j]."""

    dH: np.ndarray

    @property
    def K(self) -> int:
        return self.dH.shape[2]


def increments(bundle: PathBundle, basis: OrthonormalBasis) -> TeugelIncrements:
    if bundle.J_max < basis.K:
        raise ValueError(f"bundle carries power-jump orders up to {bundle.J_max}, basis needs {basis.K}")
    dY = bundle.dY[:, :, : basis.K]
    return TeugelIncrements(dH=dY @ basis.c.T)


def realized_covariation(incs: TeugelIncrements) -> np.ndarray:
    """Per-path sum over steps of dH^i dH^j, shape (P, K, K)."""
    dH = incs.dH
    return np.einsum("pki,pkj->pij", dH, dH)


@dataclass
class BracketResult:
    estimate: np.ndarray
    stderr: np.ndarray
    target: np.ndarray
    n_paths: int

    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.estimate - self.target) / self.stderr

    def within(self, n_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.estimate - self.target) <= n_se * self.stderr))


def summarize_covariation(per_path: np.ndarray, T: float) -> BracketResult:
    n = per_path.shape[0]
    K = per_path.shape[1]
    return BracketResult(
        estimate=per_path.mean(axis=0),
        stderr=per_path.std(axis=0, ddof=1) / np.sqrt(n),
        target=T * np.eye(K),
        n_paths=n,
    )


def bracket_test(incs: TeugelIncrements, grid: TimeGrid) -> BracketResult:
    """Monte Carlo estimate of [H^i, H^j](T), which must match delta_ij T."""
    if incs.dH.shape[0] < 100:
        raise ValueError("bracket_test needs at least 100 paths")
    if incs.dH.shape[1] != grid.N:
        raise ValueError("increments do not match the grid")
    return summarize_covariation(realized_covariation(incs), grid.T)


def bracket_test_chunked(triplet, basis, grid, n_paths, seed, chunk_size=10_000) -> BracketResult:
    """Same estimator as bracket_test, simulated chunk by chunk to bound memory."""
    from .paths import simulate_chunks

    if n_paths < 100:
        raise ValueError("bracket_test needs at least 100 paths")
    parts = []
    for b in simulate_chunks(triplet, grid, 1, basis.K, n_paths, seed, chunk_size):
        parts.append(realized_covariation(increments(b, basis)))
    return summarize_covariation(np.concatenate(parts), grid.T)
