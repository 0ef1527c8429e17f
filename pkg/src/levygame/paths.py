"""Monte Carlo simulation of the driving noise on a uniform grid.

Each path draws from its own generator seeded by ``(seed, path_index)``, so a
bundle does not depend on how paths are split into chunks.  Within a path the
draw order is fixed: Gaussians for all steps (d components of W followed by the
Levy Gaussian part), then per-step Poisson counts, then jump sizes, then
within-step jump times.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ResourceError, ShapeError
from .levy import LevyTriplet, moment_table

DEFAULT_MEMORY_BUDGET = 40_000_000  # float64 elements across dW, dW_L and dY


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("number of steps N must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


@dataclass
class PathBundle:
    """Per-path, per-step driving increments.

    Shapes: ``dW`` (P, N, d), ``dW_L`` (P, N), ``dY`` (P, N, J) where
    ``dY[..., j-1]`` is the compensated increment of the j-th power-jump
    process.  Jumps are stored flat: ``jump_path``, ``jump_step``,
    ``jump_time``, ``jump_size``.
    """

    grid: TimeGrid
    sigma: float
    moments: np.ndarray
    dW: np.ndarray
    dW_L: np.ndarray
    dY: np.ndarray
    jump_path: np.ndarray
    jump_step: np.ndarray
    jump_time: np.ndarray
    jump_size: np.ndarray
    seed: int | None = None
    path_offset: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def d(self) -> int:
        return self.dW.shape[2]

    @property
    def J_max(self) -> int:
        return self.dY.shape[2]

    def jump_counts(self) -> np.ndarray:
        return np.bincount(self.jump_path, minlength=self.n_paths)

    def jumps_of(self, p: int) -> list[tuple[float, float]]:
        sel = self.jump_path == p
        return list(zip(self.jump_time[sel].tolist(), self.jump_size[sel].tolist()))


def _power_increments(sigma, dW_L, step, size, moments, N, dt):
    J = len(moments)
    dY = np.empty((N, J))
    for j in range(1, J + 1):
        dY[:, j - 1] = np.bincount(step, weights=size**j, minlength=N) - moments[j - 1] * dt
    dY[:, 0] += sigma * dW_L
    return dY


def simulate(
    triplet: LevyTriplet,
    grid: TimeGrid,
    d: int,
    J_max: int,
    n_paths: int,
    seed: int,
    path_offset: int = 0,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> PathBundle:
    """Simulate ``n_paths`` paths with indices ``path_offset .. path_offset + n_paths - 1``."""
    if n_paths < 1 or d < 1 or J_max < 1:
        raise ValueError("n_paths, d and J_max must be >= 1")
    N, dt = grid.N, grid.dt
    need = n_paths * N * (d + 1 + J_max)
    if need > memory_budget:
        raise ResourceError(
            f"{n_paths} paths x {N} steps x {d + 1 + J_max} channels = {need} elements "
            f"exceeds the memory budget {memory_budget}; simulate in chunks"
        )
    m = moment_table(triplet.jumps, J_max).m
    rate = triplet.jumps.total_rate
    dW = np.empty((n_paths, N, d))
    dW_L = np.empty((n_paths, N))
    dY = np.empty((n_paths, N, J_max))
    jp, js, jt, jz = [], [], [], []
    sq = np.sqrt(dt)
    for i in range(n_paths):
        rng = np.random.default_rng([seed, path_offset + i])
        g = rng.standard_normal((N, d + 1)) * sq
        dW[i] = g[:, :d]
        dW_L[i] = g[:, d]
        if rate > 0:
            counts = rng.poisson(rate * dt, N)
            total = int(counts.sum())
            sizes = triplet.jumps.sample(rng, total)
            step = np.repeat(np.arange(N), counts)
            times = (step + rng.random(total)) * dt
        else:
            total = 0
            sizes = np.empty(0)
            step = np.empty(0, dtype=np.int64)
            times = np.empty(0)
        dY[i] = _power_increments(triplet.sigma, dW_L[i], step, sizes, m, N, dt)
        if total:
            jp.append(np.full(total, i))
            js.append(step)
            jt.append(times)
            jz.append(sizes)
    cat = lambda xs, dt_: np.concatenate(xs).astype(dt_) if xs else np.empty(0, dtype=dt_)
    return PathBundle(
        grid=grid, sigma=triplet.sigma, moments=m, dW=dW, dW_L=dW_L, dY=dY,
        jump_path=cat(jp, np.int64), jump_step=cat(js, np.int64),
        jump_time=cat(jt, float), jump_size=cat(jz, float),
        seed=seed, path_offset=path_offset,
        meta={"layout": "path-major, step-minor", "stream": "default_rng([seed, path_index])",
              "triplet": triplet.to_dict()},
    )


def simulate_chunks(triplet, grid, d, J_max, n_paths, seed, chunk_size,
                    memory_budget=DEFAULT_MEMORY_BUDGET) -> Iterator[PathBundle]:
    """Yield consecutive bundles covering paths 0..n_paths-1 in order."""
    for start in range(0, n_paths, chunk_size):
        yield simulate(triplet, grid, d, J_max, min(chunk_size, n_paths - start), seed,
                       path_offset=start, memory_budget=memory_budget)


def inject_paths(
    grid: TimeGrid,
    jumps: Sequence[Sequence[tuple[float, float]]],
    dW_L: np.ndarray,
    sigma: float,
    moments: Sequence[float],
    dW: np.ndarray | None = None,
) -> PathBundle:
    """Build a bundle from caller-provided noise.

    ``jumps[p]`` lists ``(time, size)`` for path p; a jump at time t belongs to
    the step (t_k, t_{k+1}] containing it.  ``moments`` holds the compensators
    m_1..m_J (and fixes J).
    """
    dW_L = np.asarray(dW_L, dtype=float)
    if dW_L.ndim != 2 or dW_L.shape[1] != grid.N:
        raise ShapeError(f"dW_L must have shape (n_paths, {grid.N}), got {dW_L.shape}")
    P, N = dW_L.shape
    if len(jumps) != P:
        raise ShapeError(f"got jump lists for {len(jumps)} paths, expected {P}")
    if dW is None:
        dW = np.zeros((P, N, 1))
    dW = np.asarray(dW, dtype=float)
    if dW.ndim != 3 or dW.shape[:2] != (P, N):
        raise ShapeError(f"dW must have shape ({P}, {N}, d), got {dW.shape}")
    m = np.asarray(moments, dtype=float)
    if m.ndim != 1 or len(m) < 1:
        raise ShapeError("moments must be a nonempty 1-d sequence")
    dY = np.empty((P, N, len(m)))
    jp, js, jt, jz = [], [], [], []
    for p, plist in enumerate(jumps):
        times = np.array([t for t, _ in plist], dtype=float)
        sizes = np.array([s for _, s in plist], dtype=float)
        if np.any((times < 0) | (times > grid.T)):
            raise ShapeError(f"jump time outside [0, T] on path {p}")
        step = np.clip(np.ceil(times / grid.dt - 1e-12).astype(np.int64) - 1, 0, N - 1)
        dY[p] = _power_increments(sigma, dW_L[p], step, sizes, m, N, grid.dt)
        jp.append(np.full(len(times), p, dtype=np.int64))
        js.append(step)
        jt.append(times)
        jz.append(sizes)
    return PathBundle(grid=grid, sigma=float(sigma), moments=m, dW=dW, dW_L=dW_L, dY=dY,
                      jump_path=np.concatenate(jp), jump_step=np.concatenate(js),
                      jump_time=np.concatenate(jt), jump_size=np.concatenate(jz),
                      meta={"layout": "path-major, step-minor", "stream": "injected"})


def cumulative(increments: np.ndarray) -> np.ndarray:
    """Levels on the grid from increments along axis 1, starting at zero."""
    inc = np.asarray(increments)
    zero = np.zeros((inc.shape[0], 1) + inc.shape[2:])
    return np.concatenate([zero, np.cumsum(inc, axis=1)], axis=1)


def empirical_mean_Y(bundle: PathBundle, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and standard error of Y^(j)(t_k) for k = 0..N."""
    if not 1 <= j <= bundle.J_max:
        raise ValueError(f"order {j} not simulated (J_max = {bundle.J_max})")
    Y = cumulative(bundle.dY[:, :, j - 1])
    n = Y.shape[0]
    se = Y.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(Y.shape[1])
    return Y.mean(axis=0), se


def write_csv(bundle: PathBundle, path) -> None:
    """Dump increments path-major, step-minor (one row per path and step)."""
    d, J = bundle.d, bundle.J_max
    header = (["path", "step", "t"] + [f"dW{i + 1}" for i in range(d)] + ["dW_L"]
              + [f"dY{j + 1}" for j in range(J)])
    t = bundle.grid.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in range(bundle.n_paths):
            for k in range(bundle.grid.N):
                row = [bundle.path_offset + p, k, repr(float(t[k]))]
                row += [repr(float(x)) for x in bundle.dW[p, k]]
                row.append(repr(float(bundle.dW_L[p, k])))
                row += [repr(float(x)) for x in bundle.dY[p, k]]
                w.writerow(row)
