"""Time grids, Brownian ensembles and pathwise sums.

Array conventions used throughout the package:

* a ``PathEnsemble`` stores Brownian values with shape ``(M, N+1, m)`` and
  increments with shape ``(M, N, m)``; path-major, time-minor;
* an adapted process has shape ``(M, T, *value_shape)`` with ``T = N+1``
  (values on every grid point) or ``T = N`` (left-endpoint values only);
* a stopping time is an ``int64`` array of grid indices, one per path, where
  ``N`` doubles as the "never reached" sentinel.

Random numbers come from numpy's ``PCG64`` bit generator seeded with the
ensemble seed, so ``(grid, m, M, seed)`` reproduces bit-identical paths on
any platform numpy supports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform grid on [0, 1]."""

    points: np.ndarray
    step: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        diffs = np.diff(pts)
        if np.any(diffs <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.max(np.abs(diffs - self.step)) > 1e-12 * max(self.step, 1.0):
            raise ValueError("grid spacing is not uniform")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def steps(self) -> int:
        return self.points.size - 1

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; ``t`` must lie on the grid."""
        j = int(round(t / self.step))
        if j < 0 or j > self.steps or abs(self.points[j] - t) > 1e-9:
            raise ValueError(f"t={t} is not a grid point")
        return j


def make_grid(steps: int) -> TimeGrid:
    """Uniform grid with ``steps`` intervals on [0, 1]."""
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    steps = int(steps)
    return TimeGrid(np.linspace(0.0, 1.0, steps + 1), 1.0 / steps)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: TimeGrid
    dims: int
    count: int
    values: np.ndarray
    increments: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "increments", _frozen(self.increments))
        n = self.grid.steps
        if self.values.shape != (self.count, n + 1, self.dims):
            raise ValueError("values shape does not match (count, N+1, dims)")
        if self.increments.shape != (self.count, n, self.dims):
            raise ValueError("increments shape does not match (count, N, dims)")

    @property
    def fingerprint(self):
        return (self.seed, self.count, self.grid.steps, self.dims)

    def terminal(self) -> np.ndarray:
        """B(1) per path, shape (M, m)."""
        return self.values[:, -1, :]

    def masked_after(self, j: int) -> "PathEnsemble":
        """Copy whose Brownian values after index ``j`` are NaN.

        Anything computed at indices <= j from such an ensemble is unchanged
        iff it never reads the future.
        """
        vals = np.array(self.values)
        inc = np.array(self.increments)
        vals[:, j + 1:, :] = np.nan
        inc[:, j:, :] = np.nan
        return PathEnsemble(self.grid, self.dims, self.count, vals, inc, self.seed)


def sample_brownian(grid: TimeGrid, dims: int, count: int, seed: int) -> PathEnsemble:
    """Sample ``count`` Brownian paths in ``dims`` dimensions on ``grid``."""
    if dims < 1 or count < 1:
        raise ValueError("dims and count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    inc = rng.standard_normal((count, grid.steps, dims)) * np.sqrt(grid.step)
    vals = np.zeros((count, grid.steps + 1, dims))
    np.cumsum(inc, axis=1, out=vals[:, 1:, :])
    return PathEnsemble(grid, int(dims), int(count), vals, inc, int(seed))


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """Discrete process on a grid; ``values`` has shape (M, T, *shape)."""

    grid: TimeGrid
    values: np.ndarray
    shape: tuple = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim < 2 or vals.shape[1] not in (self.grid.steps, self.grid.steps + 1):
            raise ValueError("values must have shape (M, N or N+1, ...)")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "shape", tuple(vals.shape[2:]))

    @property
    def count(self) -> int:
        return self.values.shape[0]


def _values(x):
    return x.values if isinstance(x, AdaptedProcess) else np.asarray(x, dtype=float)


def stopping_time(index, count: int) -> np.ndarray:
    """Broadcast a grid index (or per-path indices) to an int64 array."""
    tau = np.asarray(index, dtype=np.int64)
    if tau.ndim == 0:
        tau = np.full(count, int(tau), dtype=np.int64)
    if tau.shape != (count,):
        raise ValueError("stopping time must be a scalar or one index per path")
    return tau


def integrate_abs(h, grid: TimeGrid) -> AdaptedProcess:
    """Left-endpoint Riemann integral H(t_j) = sum_{i<j} |h(t_i)| * step.

    ``h`` is scalar per path with shape (M, N) or (M, N+1); the value at the
    final grid point, if present, is not used.
    """
    v = _values(h)
    n = grid.steps
    if v.ndim != 2 or v.shape[1] not in (n, n + 1):
        raise ValueError(f"h must have shape (M, {n}) or (M, {n + 1}); got {v.shape}")
    out = np.zeros((v.shape[0], n + 1))
    np.cumsum(np.abs(v[:, :n]) * grid.step, axis=1, out=out[:, 1:])
    return AdaptedProcess(grid, out)


def ito_sum(integrand, ensemble: PathEnsemble, start=0, stop=None) -> np.ndarray:
    """Left-endpoint Ito sum of ``integrand`` against dB over [start, stop].

    ``integrand`` has shape (M, N, d, m) (result (M, d)) or (M, N, m)
    (result (M,)). Values at index N, if supplied, are ignored. The sum is
    taken as a difference of prefix sums, so a window starting at 0 with
    the increments themselves reproduces B(stop) bit for bit.
    """
    z = _values(integrand)
    n, m, count = ensemble.grid.steps, ensemble.dims, ensemble.count
    if z.shape[0] != count or z.shape[1] not in (n, n + 1) or z.shape[-1] != m:
        raise ValueError("integrand shape does not match the ensemble")
    z = z[:, :n]
    if stop is None:
        stop = n
    a = stopping_time(start, count)
    b = stopping_time(stop, count)
    if np.any(a > b) or np.any(a < 0) or np.any(b > n):
        raise ValueError("ito_sum window is inverted or off the grid")
    if z.ndim == 4:
        contrib = (z * ensemble.increments[:, :, None, :]).sum(axis=-1)
    elif z.ndim == 3:
        contrib = (z * ensemble.increments).sum(axis=-1)
    else:
        raise ValueError("integrand must be (M, N, d, m) or (M, N, m)")
    prefix = np.zeros((count, n + 1) + contrib.shape[2:])
    np.cumsum(contrib, axis=1, out=prefix[:, 1:])
    rows = np.arange(count)
    return prefix[rows, b] - prefix[rows, a]


def check_adapted(producer: Callable[[PathEnsemble], np.ndarray], ensemble: PathEnsemble,
                  cuts=None, last_index=None) -> bool:
    """Audit a producer for adaptedness by poisoning the future with NaN.

    ``producer(ensemble)`` returns an array (M, T, ...). For every cut j the
    producer is rerun on ``ensemble.masked_after(j)`` and its output at
    indices <= j must be unchanged and finite. Returns True or raises
    AssertionError naming the first offending cut.
    """
    reference = np.asarray(producer(ensemble))
    n = ensemble.grid.steps
    top = reference.shape[1] - 1 if last_index is None else last_index
    if cuts is None:
        cuts = sorted({0, n // 3, n // 2, max(n - 1, 0)})
    for j in cuts:
        upto = min(j, top)
        masked = np.asarray(producer(ensemble.masked_after(j)))
        got, want = masked[:, : upto + 1], reference[:, : upto + 1]
        if not np.all(np.isfinite(got)) or not np.array_equal(got, want):
            raise AssertionError(f"producer reads Brownian values beyond index {j}")
    return True


def save_ensemble_csv(ensemble: PathEnsemble, path) -> None:
    """Write ``path,index,t,b0..b{m-1}`` rows, path-major then time-minor."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "index", "t"] + [f"b{k}" for k in range(ensemble.dims)])
        for p in range(ensemble.count):
            for j, t in enumerate(ensemble.grid.points):
                w.writerow([p, j, repr(float(t))] + [repr(float(x)) for x in ensemble.values[p, j]])


def load_ensemble_csv(path, seed: int = -1) -> PathEnsemble:
    """Inverse of :func:`save_ensemble_csv`; increments are recomputed as differences."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    count = int(raw[:, 0].max()) + 1
    n = int(raw[:, 1].max())
    dims = raw.shape[1] - 3
    vals = raw[:, 3:].reshape(count, n + 1, dims)
    return PathEnsemble(make_grid(n), dims, count, vals, np.diff(vals, axis=1), seed)
