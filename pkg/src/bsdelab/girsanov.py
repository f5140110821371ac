"""Signed z-combinations, Novikov windows, drifts, densities and domination checks.

Window indices follow the left-endpoint convention: a window [left, right)
covers the grid intervals whose left index j satisfies left <= j < right.
Domination is checked at the grid points left..right inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import WindowContractError
from .solver import SolutionPair
from .stochastic import AdaptedProcess, PathEnsemble, integrate_abs, stopping_time


def _values(x):
    return x.values if isinstance(x, AdaptedProcess) else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ZCombination:
    z: np.ndarray  # (M, N, m)
    magnitude: np.ndarray  # (M, N)
    cumulative: AdaptedProcess  # int_0^t |z_mn| ds, (M, N+1)
    dz_norm: np.ndarray  # ||Z_A - Z_B|| (Frobenius), (M, N)


def _same_ensemble(solA, solB):
    if solA.Y.values.shape[1:] != solB.Y.values.shape[1:] or solA.Z.values.shape[1:] != solB.Z.values.shape[1:]:
        raise ValueError("solutions disagree on grid or dimensions")
    fa, fb = solA.meta.get("fingerprint"), solB.meta.get("fingerprint")
    if fa is not None and fb is not None and fa != fb:
        raise ValueError("solutions were computed on different ensembles")


def signed_z_combination(solA: SolutionPair, solB: SolutionPair) -> ZCombination:
    """z_mn(t) = sum_i sgn(Y_A^i - Y_B^i)(t) (Z_A^i - Z_B^i)(t), with sgn(0) = 0."""
    _same_ensemble(solA, solB)
    ya, yb = solA.Y.values, solB.Y.values
    za, zb = solA.Z.values, solB.Z.values
    n = za.shape[1]
    count = max(ya.shape[0], yb.shape[0])
    sgn = np.sign(ya[:, :n] - yb[:, :n])
    dz = za - zb
    z = np.broadcast_to(np.einsum("pjd,pjdk->pjk", sgn, dz), (count, n, dz.shape[-1]))
    z = np.array(z)
    mag = np.sqrt(np.einsum("pjk,pjk->pj", z, z))
    dz_norm = np.broadcast_to(np.sqrt(np.sum(dz ** 2, axis=(2, 3))), (count, n))
    return ZCombination(z, mag, integrate_abs(mag, solA.Y.grid), np.array(dz_norm))


@dataclass(frozen=True)
class GirsanovWindow:
    left: np.ndarray
    right: np.ndarray
    eps0: float
    nondegenerate_fraction: float

    def mask(self, steps):
        j = np.arange(steps)[None, :]
        return (j >= self.left[:, None]) & (j < self.right[:, None])

    def validate(self, zabs, znorm):
        """Raise WindowContractError unless eps0 <= |z_mn| and ||dZ|| < 1/eps0 inside every window."""
        inside = self.mask(zabs.shape[1])
        if np.any(inside & (zabs < self.eps0)):
            raise WindowContractError("|z_mn| drops below eps0 inside a window")
        if np.any(inside & (znorm >= 1.0 / self.eps0)):
            raise WindowContractError("||Z_A - Z_B|| reaches 1/eps0 inside a window")
        return True


def novikov_window(z_mn, z_norm_diff, interval, eps0: float) -> GirsanovWindow:
    """Per path: entry at the first |z_mn| >= eps0; exit at the first later |z_mn| < eps0
    or the first ||dZ|| >= 1/eps0; everything clipped to ``interval``.

    ``z_mn`` may be (M, N, m) or the magnitudes (M, N).
    """
    if not 0.0 < eps0 < 1.0:
        raise ValueError("eps0 must lie in (0, 1)")
    z = _values(z_mn)
    zabs = np.sqrt(np.einsum("pjk,pjk->pj", z, z)) if z.ndim == 3 else np.abs(z)
    zabs = np.ascontiguousarray(zabs, dtype=float)
    znorm = np.ascontiguousarray(_values(z_norm_diff), dtype=float)
    count, n = zabs.shape
    if znorm.shape != (count, n):
        raise ValueError("z_norm_diff shape does not match z_mn")
    start, end = interval
    a = stopping_time(start, count)
    b = stopping_time(end, count)
    if np.any(a > b) or np.any(a < 0) or np.any(b > n):
        raise ValueError("window interval is inverted or off the grid")
    left, right = _kernels.window_scan(zabs, znorm, a, b, float(eps0))
    win = GirsanovWindow(left, right, float(eps0), float(np.mean(left < right)))
    win.validate(zabs, znorm)
    return win


def drift_eta(numerator, z_mn, window: GirsanovWindow, multiplier: float, bound=None) -> np.ndarray:
    """eta = multiplier * numerator / |z_mn|^2 * z_mn inside the window, exactly 0 outside.

    ``numerator`` holds Psi(||Z_A - Z_B||) per path and time (M, N). Passing
    ``bound`` (e.g. multiplier * Psi(1/eps0) / eps0) asserts the Novikov cap.
    """
    z = _values(z_mn)
    if z.ndim == 2:
        z = z[:, :, None]
    num = _values(numerator)
    count, n, _ = z.shape
    inside = window.mask(n)
    zabs = np.sqrt(np.einsum("pjk,pjk->pj", z, z))
    if np.any(inside & (zabs < window.eps0)):
        raise WindowContractError("|z_mn| < eps0 inside a window; refusing to divide")
    scale = np.zeros((count, n))
    scale[inside] = multiplier * num[inside] / zabs[inside] ** 2
    eta = scale[:, :, None] * z
    if bound is not None:
        mag = np.sqrt(np.einsum("pjk,pjk->pj", eta, eta))
        if np.any(mag > bound * (1 + 1e-12)):
            raise WindowContractError("drift exceeds its Novikov bound")
    return eta


@dataclass(frozen=True)
class DensityReport:
    log_density: np.ndarray
    density: np.ndarray
    mean: float
    stderr: float
    corrected_mean: np.ndarray  # E[D * sum (dB - eta h)] per coordinate
    corrected_stderr: np.ndarray

    def weighted_mean(self, values):
        """Density-weighted ensemble mean of per-path ``values`` and its standard error."""
        w = self.density.reshape((-1,) + (1,) * (np.ndim(values) - 1)) * np.asarray(values, dtype=float)
        return w.mean(axis=0), w.std(axis=0, ddof=1) / math.sqrt(w.shape[0])


def density(eta, ensemble: PathEnsemble, window: GirsanovWindow = None) -> DensityReport:
    """exp(sum eta.dB - 1/2 sum |eta|^2 h) per path, built in log space."""
    e = _values(eta)
    if e.ndim == 2:
        e = e[:, :, None]
    count, n, m = ensemble.count, ensemble.grid.steps, ensemble.dims
    e = np.broadcast_to(e, (count, n, m))
    if window is not None:
        e = np.where(window.mask(n)[:, :, None], e, 0.0)
    h = ensemble.grid.step
    dB = ensemble.increments
    logd = np.einsum("pjk,pjk->p", e, dB) - 0.5 * h * np.einsum("pjk,pjk->p", e, e)
    if not np.all(np.isfinite(logd)):
        raise FloatingPointError("non-finite log density")
    dens = np.exp(logd)
    if np.any(dens <= 0):
        raise FloatingPointError("density underflowed to zero")
    shifted = (dB - e * h).sum(axis=1)
    weighted = dens[:, None] * shifted
    root = math.sqrt(count)
    return DensityReport(logd, dens, float(dens.mean()), float(dens.std(ddof=1) / root) if count > 1 else 0.0,
                         weighted.mean(axis=0), weighted.std(axis=0, ddof=1) / root)


@dataclass(frozen=True)
class DominationReport:
    worst_exceedance: float
    worst_path: int
    worst_index: int
    slack: float
    checked_points: int
    passed: bool


def domination_check(solA: SolutionPair, solB: SolutionPair, u, window: GirsanovWindow, slack: float = 0.0,
                     weights=None) -> DominationReport:
    """Check sum_i w_i |Y_A^i - Y_B^i|(t) <= u(t) + slack on left <= t <= right.

    ``u`` is an OdeSolution or an array on the solutions' grid, either (N+1,)
    or per path (M, N+1).
    """
    _same_ensemble(solA, solB)
    dy = np.abs(solA.Y.values - solB.Y.values)
    w = np.ones(dy.shape[2]) if weights is None else np.asarray(weights, dtype=float)
    x = dy @ w
    uu = np.asarray(getattr(u, "values", u), dtype=float)
    count = window.left.size
    x = np.broadcast_to(x, (count, x.shape[1]))
    uu = np.broadcast_to(uu, x.shape)
    j = np.arange(x.shape[1])[None, :]
    inside = (j >= window.left[:, None]) & (j <= window.right[:, None]) & (window.left < window.right)[:, None]
    excess = np.where(inside, x - uu - slack, -np.inf)
    flat = int(np.argmax(excess))
    p, t = divmod(flat, x.shape[1])
    worst = float(excess[p, t]) if inside.any() else -np.inf
    return DominationReport(worst, int(p), int(t), float(slack), int(inside.sum()), bool(worst <= 0.0))
