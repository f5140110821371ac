"""Level hitting times and the flat / increasing partition of H(t) = int_0^t |h| ds.

Grid conventions: H has shape (M, N+1); the interval [j, j+1] is *flat* on
a path when H[j+1] - H[j] <= flat_tol * step * TV, with TV = H[N] - H[0]
the path's total variation, and *increasing* otherwise. Stopping indices
equal to N stand for the right end of the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .stochastic import AdaptedProcess, PathEnsemble, stopping_time

FLAT, INCREASING = 0, 1


def _values(x):
    return x.values if isinstance(x, AdaptedProcess) else np.asarray(x, dtype=float)


def _check_monotone(H):
    if H.ndim != 2:
        raise ValueError("H must have shape (M, N+1)")
    if np.any(np.diff(H, axis=1) < 0):
        raise ValueError("H must be non-decreasing along every path")


@dataclass(frozen=True)
class LevelHit:
    level: float
    time: np.ndarray  # int64 grid index per path
    reached: np.ndarray  # bool per path


def level_hitting(H, r: float) -> LevelHit:
    """First grid index with H >= r, else N."""
    v = np.ascontiguousarray(_values(H), dtype=float)
    _check_monotone(v)
    count, npts = v.shape
    first = _kernels.first_at_least(v, float(r), np.zeros(count, np.int64), np.full(count, npts, np.int64))
    reached = first < npts
    return LevelHit(float(r), np.minimum(first, npts - 1), reached)


@dataclass(frozen=True)
class DecompositionReport:
    """Segments of every path, listed path-major in time order.

    ``seg_*`` arrays have one entry per segment. ``pi[p]`` is the boundary
    list (start, then each segment's right end) and ``labels[p]`` the
    matching labels.
    """

    base_level: float
    start: np.ndarray
    end: np.ndarray
    seg_path: np.ndarray
    seg_label: np.ndarray
    seg_left: np.ndarray
    seg_right: np.ndarray
    seg_increment: np.ndarray
    threshold: np.ndarray
    coverage_fraction: np.ndarray
    steps: int

    def segments(self, p):
        sel = self.seg_path == p
        return list(zip(self.seg_label[sel].tolist(), self.seg_left[sel].tolist(), self.seg_right[sel].tolist()))

    @property
    def pi(self):
        out = []
        for p in range(self.start.size):
            sel = self.seg_path == p
            out.append(np.concatenate(([self.start[p]], self.seg_right[sel])))
        return out

    @property
    def labels(self):
        return [self.seg_label[self.seg_path == p] for p in range(self.start.size)]

    def accumulation_index(self):
        """Per path, left end of the first segment spanning a single step (else -1)."""
        out = np.full(self.start.size, -1, dtype=np.int64)
        short = (self.seg_right - self.seg_left) <= 1
        for k in np.flatnonzero(short)[::-1]:
            out[self.seg_path[k]] = self.seg_left[k]
        return out


def decompose(H, start=0, flat_tol: float = 1e-12, end=None, base_level: float = 0.0) -> DecompositionReport:
    """Partition [start, end] of every path into maximal flat and increasing runs."""
    if flat_tol <= 0:
        raise ValueError("flat_tol must be positive")
    v = np.ascontiguousarray(_values(H), dtype=float)
    _check_monotone(v)
    count, npts = v.shape
    n = npts - 1
    a = stopping_time(start, count)
    b = stopping_time(n if end is None else end, count)
    if np.any(a < 0) or np.any(b > n) or np.any(a > b):
        raise ValueError("decomposition window is inverted or off the grid")
    inc = np.diff(v, axis=1)
    tv = v[:, -1] - v[:, 0]
    thr = flat_tol * (1.0 / n) * tv
    labels = np.ascontiguousarray((inc > thr[:, None]).astype(np.uint8))
    path, lab, left, right = _kernels.run_segments(labels, a, b)
    rows_inc = v[path, right] - v[path, left]
    covered = np.zeros(count)
    np.add.at(covered, path, (right - left).astype(float))
    span = (n - a).astype(float)
    coverage = np.where(span > 0, covered / np.where(span > 0, span, 1.0), 1.0)
    report = DecompositionReport(float(base_level), a, b, path, lab, left, right, rows_inc, thr, coverage, n)
    _check_version(report, inc)
    return report


def _check_version(report, inc):
    """Flat runs stay under the threshold, increasing runs stay strictly above it."""
    lengths = report.seg_right - report.seg_left
    if lengths.sum() == 0:
        return
    path = np.repeat(report.seg_path, lengths)
    label = np.repeat(report.seg_label, lengths)
    offset = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    j = np.repeat(report.seg_left, lengths) + offset
    above = inc[path, j] > report.threshold[path]
    bad = np.flatnonzero(above != (label == INCREASING))
    if bad.size:
        raise AssertionError(f"segment labels inconsistent with increments on path {path[bad[0]]}")


def decompose_levels(H, levels, flat_tol: float = 1e-12):
    """One decomposition per level r, each started at the level's hitting time."""
    return [decompose(H, level_hitting(H, r).time, flat_tol, base_level=r) for r in levels]


def pathological_h(ensemble: PathEnsemble, depth: int) -> AdaptedProcess:
    """h = |B| + 1 on the dyadic bands [2^{1-2n}, 2^{2-2n}], n = 1..depth, and 0 elsewhere."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    need = 2 ** (2 * depth)
    if ensemble.grid.steps < need:
        raise ValueError(f"grid too coarse for depth {depth}: need N >= {need}")
    t = ensemble.grid.points
    band = np.zeros(t.size, dtype=bool)
    for k in range(1, depth + 1):
        band |= (t >= 0.5 ** (2 * k - 1)) & (t <= 0.5 ** (2 * k - 2))
    mag = np.sqrt(np.einsum("pjk,pjk->pj", ensemble.values, ensemble.values))
    return AdaptedProcess(ensemble.grid, np.where(band[None, :], mag + 1.0, 0.0))


@dataclass(frozen=True)
class CoverageReport:
    covered: np.ndarray  # fraction of [0, 1] per path
    residual: np.ndarray
    tolerance: float
    passed: bool


def coverage_check(reports, tolerance: float = 0.0) -> CoverageReport:
    """Union over levels of the labeled intervals, per path, as a fraction of [0, 1]."""
    if not reports:
        raise ValueError("need at least one decomposition")
    n = reports[0].steps
    count = reports[0].start.size
    if any(r.steps != n or r.start.size != count for r in reports):
        raise ValueError("reports do not share one ensemble")
    hit = np.zeros((count, n), dtype=bool)
    for r in reports:
        for p, lo, hi in zip(r.seg_path, r.seg_left, r.seg_right):
            hit[p, lo:hi] = True
    covered = hit.mean(axis=1)
    residual = 1.0 - covered
    return CoverageReport(covered, residual, float(tolerance), bool(np.all(residual <= tolerance + 1e-15)))


def segment_rows(report: DecompositionReport):
    """(path, label, left, right, H-increment) rows for CSV export."""
    names = {FLAT: "flat", INCREASING: "increasing"}
    return [
        (int(p), names[int(lab)], int(lo), int(hi), float(dh))
        for p, lab, lo, hi, dh in zip(report.seg_path, report.seg_label, report.seg_left, report.seg_right,
                                      report.seg_increment)
    ]
