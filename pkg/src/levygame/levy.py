"""Finite-activity Levy drivers: jump measures, moments and the Gram matrix.

A driver is described by ``LevyTriplet(mean_rate, sigma, jumps)`` where
``mean_rate`` is E[L(1)].  The usual truncated triplet (a, sigma, nu) maps to
it through ``mean_rate = a + int_{|x|>=1} x nu(dx)``; for finite-activity
measures the truncation only shifts the drift, and the drift never reaches the
compensated power-jump processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate

from .errors import DegenerateDriverError


@dataclass(frozen=True)
class Atoms:
    """Jump measure with point masses ``rates[a]`` at ``sizes[a]``."""

    sizes: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        sizes = tuple(float(s) for s in self.sizes)
        rates = tuple(float(r) for r in self.rates)
        if len(sizes) != len(rates):
            raise ValueError("atoms need one rate per size")
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise ValueError("atom rates must be finite and nonnegative")
        if any(s == 0 or not math.isfinite(s) for s in sizes):
            raise ValueError("atom sizes must be finite and nonzero")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "rates", rates)

    @property
    def total_rate(self) -> float:
        return float(sum(self.rates))

    def moment(self, j: int) -> float:
        return float(sum(r * s**j for s, r in zip(self.sizes, self.rates)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count == 0:
            return np.empty(0)
        p = np.asarray(self.rates) / self.total_rate
        idx = rng.choice(len(self.sizes), size=count, p=p)
        return np.asarray(self.sizes)[idx]

    def to_dict(self) -> dict:
        return {"type": "atoms", "sizes": list(self.sizes), "rates": list(self.rates)}


@dataclass(frozen=True)
class Exponential:
    """Positive jumps of size Exp(rate) arriving with the given intensity."""

    intensity: float
    rate: float

    def __post_init__(self):
        if not (self.intensity > 0 and self.rate > 0):
            raise ValueError("exponential jumps need intensity > 0 and rate > 0")

    @property
    def total_rate(self) -> float:
        return float(self.intensity)

    def moment(self, j: int) -> float:
        return self.intensity * math.factorial(j) / self.rate**j

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, size=count)

    def to_dict(self) -> dict:
        return {"type": "exponential", "intensity": self.intensity, "rate": self.rate}


@dataclass(frozen=True)
class NoJumps:
    total_rate: float = field(default=0.0, init=False)

    def moment(self, j: int) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count:
            raise ValueError("NoJumps cannot produce jumps")
        return np.empty(0)

    def to_dict(self) -> dict:
        return {"type": "none"}


JumpSpec = Union[Atoms, Exponential, NoJumps]


@dataclass(frozen=True)
class LevyTriplet:
    mean_rate: float
    sigma: float
    jumps: JumpSpec = NoJumps()

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if self.sigma == 0 and moment(self.jumps, 2) == 0:
            raise DegenerateDriverError("sigma = 0 and no jumps: the driver is degenerate")

    @classmethod
    def from_dict(cls, d: dict) -> "LevyTriplet":
        return cls(float(d.get("mean_rate", 0.0)), float(d["sigma"]),
                   jumps_from_dict(d.get("jumps", {"type": "none"})))

    def to_dict(self) -> dict:
        return {"mean_rate": self.mean_rate, "sigma": self.sigma, "jumps": self.jumps.to_dict()}


def jumps_from_dict(d: dict) -> JumpSpec:
    kind = d.get("type", "none")
    if kind == "atoms":
        return Atoms(tuple(d["sizes"]), tuple(d["rates"]))
    if kind == "exponential":
        return Exponential(float(d["intensity"]), float(d["rate"]))
    if kind == "none":
        return NoJumps()
    raise ValueError(f"unsupported jump family {kind!r} (only finite-activity families)")


def moment(jumps: JumpSpec, j: int, method: str = "analytic") -> float:
    """Return m_j = int x^j nu(dx).

    ``method="quad"`` integrates numerically instead; it is meant as an
    independent cross-check in tests.
    """
    if j < 1:
        raise ValueError("moment order must be >= 1")
    if method == "analytic":
        return jumps.moment(j)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    if isinstance(jumps, Exponential):
        dens = lambda x: jumps.intensity * jumps.rate * math.exp(-jumps.rate * x)
        val, _ = integrate.quad(lambda x: x**j * dens(x), 0.0, np.inf, limit=200)
        return val
    return jumps.moment(j)


@dataclass(frozen=True)
class MomentTable:
    """Moments m_1..m_order of the jump measure; ``m[j - 1]`` holds m_j."""

    m: np.ndarray

    def __getitem__(self, j: int) -> float:
        return float(self.m[j - 1])

    @property
    def order(self) -> int:
        return len(self.m)


def moment_table(jumps: JumpSpec, order: int) -> MomentTable:
    return MomentTable(np.array([moment(jumps, j) for j in range(1, order + 1)]))


def gram_matrix(triplet: LevyTriplet, K: int) -> np.ndarray:
    """Gram matrix of 1, x, ..., x^(K-1) under mu(dx) = x^2 nu(dx) + sigma^2 delta_0.

    Entry (i, j), zero-based, is m_{i+j+2} plus sigma^2 in the corner.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    mt = moment_table(triplet.jumps, 2 * K)
    G = np.empty((K, K))
    for i in range(K):
        for j in range(K):
            G[i, j] = mt[i + j + 2]
    G[0, 0] += triplet.sigma**2
    return G


def cholesky_pivots(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower Cholesky factor of G together with the squared pivots.

    Stops at the first pivot that is not strictly positive; the returned
    factor then has the failing row left as zeros.
    """
    G = np.asarray(G, dtype=float)
    K = G.shape[0]
    L = np.zeros_like(G)
    piv = np.zeros(K)
    for i in range(K):
        d = G[i, i] - L[i, :i] @ L[i, :i]
        piv[i] = d
        if not d > 0:
            return L, piv[: i + 1]
        L[i, i] = math.sqrt(d)
        for r in range(i + 1, K):
            L[r, i] = (G[r, i] - L[r, :i] @ L[i, :i]) / L[i, i]
    return L, piv


def pivot_ok(pivot: float, diag: float, tol: float) -> bool:
    # Pivots are compared relative to the diagonal entry so that large
    # high-order moments do not defeat an absolute tolerance.
    return pivot > tol * max(1.0, abs(diag))


def effective_order(G: np.ndarray, tol: float = 1e-12) -> int:
    """Largest K' such that the leading K' x K' block has Cholesky pivots > tol.

    Returns 0 when even the first pivot fails (degenerate driver).
    """
    G = np.asarray(G, dtype=float)
    _, piv = cholesky_pivots(G)
    for i, p in enumerate(piv):
        if not pivot_ok(p, G[i, i], tol):
            return i
    return G.shape[0]


def validate(triplet: LevyTriplet, K: int = 3) -> list[str]:
    """Check a triplet and return human-readable diagnostics.

    Raises DegenerateDriverError for sigma = 0 without jumps.
    """
    if triplet.sigma == 0 and moment(triplet.jumps, 2) == 0:
        raise DegenerateDriverError("sigma = 0 and no jumps: the driver is degenerate")
    notes = [f"Gaussian coefficient sigma = {triplet.sigma:g}"]
    mt = moment_table(triplet.jumps, 2 * K + 2)
    if not np.all(np.isfinite(mt.m)):
        raise ValueError("jump measure has infinite moments up to the required order")
    notes.append(f"moments m_1..m_{mt.order} finite (max {np.max(np.abs(mt.m)):.4g})")
    j = triplet.jumps
    if isinstance(j, Atoms):
        reach = max((abs(s) for s in j.sizes), default=0.0)
        notes.append(f"bounded support (|x| <= {reach:g}): exp(lam|x|) integrable for every lam > 0")
    elif isinstance(j, Exponential):
        notes.append(
            f"exp(lam|x|) integrable iff lam < rate = {j.rate:g}; "
            f"e.g. lam = {j.rate / 2:g}, eps = 1"
        )
    else:
        notes.append("no jumps: pure Brownian driver")
    G = gram_matrix(triplet, K)
    notes.append(f"effective Teugel order {effective_order(G)} of requested {K}")
    return notes
