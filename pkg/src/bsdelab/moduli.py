"""Continuity moduli, the Osgood divergence heuristic and Pasch-Hausdorff regularization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DivergentEnvelopeError, ModulusDegeneracyError


@dataclass(frozen=True, eq=False)
class Modulus:
    """Non-decreasing modulus with ``eval(0) = 0`` and ``eval(x) <= K (1 + x)``.

    ``eval`` must accept and return numpy arrays. ``osgood_declared`` records
    the ground truth of the divergence of the integral of 1/eval at 0+, which
    no finite computation can decide.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    growth_K: float
    osgood_declared: bool
    name: str = "custom"

    def __call__(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.asarray(self.eval(x), dtype=float)


def zero_modulus() -> Modulus:
    return Modulus(lambda x: np.zeros_like(x), 0.0, False, "zero")


def linear_modulus(c: float = 1.0) -> Modulus:
    c = abs(float(c))
    return Modulus(lambda x: c * x, c, True, f"linear({c:g})")


def sqrt_modulus(c: float = 1.0) -> Modulus:
    c = abs(float(c))
    return Modulus(lambda x: c * np.sqrt(x), c, False, f"sqrt({c:g})")


def _osgood_eval(x):
    xs = np.minimum(x, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = xs * (1.0 - np.log(xs))
    v[xs <= 0.0] = 0.0
    return v


def osgood_modulus() -> Modulus:
    """x (1 - ln x) on (0, 1], continued with matching value and slope (0) above 1."""
    return Modulus(_osgood_eval, 1.0, True, "osgood")


def clipped_linear_modulus(slope: float = 2.0, cap: float = 1.0) -> Modulus:
    """min(slope * x, cap); its growth constant is slope*cap/(slope+cap)."""
    slope, cap = float(slope), float(cap)
    growth = slope * cap / (slope + cap)
    return Modulus(lambda x: np.minimum(slope * x, cap), growth, True, f"min({slope:g}x,{cap:g})")


MODULI = {
    "zero": lambda **kw: zero_modulus(),
    "linear": linear_modulus,
    "identity": lambda **kw: linear_modulus(1.0),
    "sqrt": sqrt_modulus,
    "osgood": lambda **kw: osgood_modulus(),
    "clipped_linear": clipped_linear_modulus,
}


def modulus_by_name(name: str, **params) -> Modulus:
    try:
        factory = MODULI[name]
    except KeyError:
        raise ValueError(f"unknown modulus {name!r}; choose from {sorted(MODULI)}") from None
    return factory(**params)


def check_modulus(phi: Modulus, probes=None, atol=1e-12) -> dict:
    """Probe the Modulus invariants; returns a dict of booleans."""
    x = np.concatenate(([0.0], np.geomspace(1e-12, 1e3, 2000))) if probes is None else np.asarray(probes)
    x = np.sort(x)
    v = phi(x)
    return {
        "zero_at_zero": bool(phi(np.array([0.0]))[0] == 0.0),
        "non_decreasing": bool(np.all(np.diff(v) >= -atol)),
        "linear_growth": bool(np.all(v <= phi.growth_K * (1.0 + x) + atol)),
    }


@dataclass(frozen=True)
class OsgoodVerdict:
    verdict: bool
    deltas: np.ndarray
    integrals: np.ndarray
    increment_ratio: float
    extrapolated: float


def osgood_check(phi: Modulus, delta_floor: float = 1e-8, tolerance_growth: float = 1e3,
                 plateau_ratio: float = 0.8) -> OsgoodVerdict:
    """Numerical heuristic for the divergence of I(delta) = int_delta^1 dx / phi(x).

    I is tabulated on a geometric sweep of delta from 1 down to
    ``delta_floor`` (about one point per decade). If successive increments
    shrink by less than ``plateau_ratio`` the curve is treated as still
    growing (log-type divergence). Otherwise the geometric tail is
    extrapolated and compared with ``tolerance_growth``.
    """
    if not 0.0 < delta_floor < 1.0:
        raise ValueError("delta_floor must lie in (0, 1)")
    probe = np.geomspace(delta_floor, 1.0, 64 * max(1, int(np.ceil(-np.log10(delta_floor)))))
    if np.any(phi(probe) <= 0.0):
        bad = probe[phi(probe) <= 0.0][0]
        raise ModulusDegeneracyError(f"modulus vanishes at x={bad:g} > 0")

    def integrand(s):
        x = np.exp(s)
        return x / float(phi(np.array([x]))[0])

    decades = max(2, int(np.ceil(-np.log10(delta_floor))))
    deltas = np.geomspace(1.0, delta_floor, decades + 1)
    pieces = [
        integrate.quad(integrand, np.log(lo), np.log(hi), epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        for hi, lo in zip(deltas[:-1], deltas[1:])
    ]
    integrals = np.concatenate(([0.0], np.cumsum(pieces)))
    last, prev = pieces[-1], pieces[-2]
    ratio = last / prev if prev > 0 else np.inf
    if ratio >= plateau_ratio:
        extrapolated, verdict = np.inf, True
    else:
        extrapolated = integrals[-1] + last * ratio / (1.0 - ratio)
        verdict = bool(extrapolated > tolerance_growth)
    return OsgoodVerdict(verdict, deltas, integrals, float(ratio), float(extrapolated))


@dataclass(frozen=True, eq=False)
class RegularizedModulus(Modulus):
    """Pasch-Hausdorff regularization of ``base`` at slope ``k``."""

    base: Modulus = None
    k: float = 0.0
    probe_grid: np.ndarray = None


def _record_index(vals):
    """Index of the latest running-maximum record at or before each position."""
    run = np.maximum.accumulate(vals)
    idx = np.where(vals == run, np.arange(vals.size), 0)
    return run, np.maximum.accumulate(idx)


def _sup_over_grid(phi_vals, ys, k, x):
    """max_j phi(y_j) - k |x - y_j| via prefix/suffix record maxima."""
    up, up_idx = _record_index(phi_vals + k * ys)
    rev_vals = (phi_vals - k * ys)[::-1]
    down_rev, down_idx_rev = _record_index(rev_vals)
    down = down_rev[::-1]
    down_idx = ys.size - 1 - down_idx_rev[::-1]
    i = np.searchsorted(ys, x, side="right")
    left_ok = i > 0
    right_ok = i < ys.size
    li = np.clip(i - 1, 0, ys.size - 1)
    ri = np.clip(i, 0, ys.size - 1)
    left = np.where(left_ok, up[li] - k * x, -np.inf)
    right = np.where(right_ok, down[ri] + k * x, -np.inf)
    best = np.where(left >= right, up_idx[li], down_idx[ri])
    return np.maximum(left, right), best


def lipschitz_regularize(phi: Modulus, k: float, probe_grid=None, grid_points: int = 100_000,
                         refine_rounds: int = 3) -> RegularizedModulus:
    """Phi_k(x) = sup_{y >= 0} { phi(y) - k |x - y| }.

    The sup is taken over a dense y-grid (uniform plus geometric near 0,
    plus the probe points) whose right end is far enough out that the
    linear-growth tail bound K(1+y) - k(y-x) cannot beat the grid maximum.
    Each query then refines around its grid argmax. Negative y never win
    because phi is non-decreasing.
    """
    k = float(k)
    if k <= 0:
        raise ValueError("k must be positive")
    K = float(phi.growth_K)
    if k <= K:
        raise DivergentEnvelopeError(f"k={k:g} must exceed the growth constant K={K:g}")
    probe = np.linspace(0.0, 10.0, 2001) if probe_grid is None else np.asarray(probe_grid, dtype=float)
    if np.any(probe < 0):
        raise ValueError("probe grid must be non-negative")
    xmax = float(probe.max()) if probe.size else 1.0
    ymax = max(xmax, (K + k * xmax) / (k - K)) * 1.05 + 1.0
    ys = np.unique(np.concatenate((
        np.linspace(0.0, ymax, grid_points),
        np.geomspace(1e-14, ymax, grid_points // 2),
        probe,
    )))
    phi_ys = phi(ys)

    def ev(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        flat = x.ravel()
        val, best = _sup_over_grid(phi_ys, ys, k, flat)
        lo = ys[np.clip(best - 1, 0, ys.size - 1)]
        hi = ys[np.clip(best + 1, 0, ys.size - 1)]
        frac = np.linspace(0.0, 1.0, 201)
        for _ in range(refine_rounds):
            cand = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
            cv = phi(cand) - k * np.abs(flat[:, None] - cand)
            j = np.argmax(cv, axis=1)
            rows = np.arange(flat.size)
            val = np.maximum(val, cv[rows, j])
            width = (hi - lo) / 200.0
            centre = cand[rows, j]
            lo, hi = np.maximum(centre - width, 0.0), centre + width
        val = np.maximum(val, phi(flat))
        return val.reshape(x.shape)

    return RegularizedModulus(ev, K, phi.osgood_declared, f"{phi.name}_k{k:g}", phi, k, probe)
