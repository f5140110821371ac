"""Least-squares Monte Carlo solver for Lipschitz BSDEs and deterministic references.

The scheme walks backward over the grid. At step j it regresses on a
Hermite basis in the current Brownian value B(t_j):

    cont_j = E[Y_{j+1} | B_j]
    Z_j    = E[(Y_{j+1} - cont_j) dB_j^T | B_j] / h
    Y_j    = cont_j + h f(t_j, Y_j, Z_j)          (Picard sweeps in Y)

Regression coefficients are kept so the solution can be replayed on
another ensemble, which is how the adaptedness audit is run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .drivers import Driver, TerminalCondition, deterministic_driver
from .envelope import BackwardOdeProblem, solve_backward
from .errors import NonLipschitzDriverError
from .moduli import Modulus
from .stochastic import AdaptedProcess, PathEnsemble, TimeGrid


@dataclass(frozen=True)
class RegressionConfig:
    degree: int = 3
    ridge: float = 1e-10
    fallback_ridge: float = 1e-6
    max_condition: float = 1e12

    def __post_init__(self):
        if self.degree < 0 or self.ridge < 0:
            raise ValueError("degree and ridge must be non-negative")


@dataclass(frozen=True, eq=False)
class SolutionPair:
    Y: AdaptedProcess  # (M, N+1, d)
    Z: AdaptedProcess  # (M, N, d, m)
    meta: dict

    @property
    def y0(self):
        return self.Y.values[:, 0].mean(axis=0)


def _exponents(m, degree):
    return [e for e in product(range(degree + 1), repeat=m) if sum(e) <= degree]


def _hermite(x, degree):
    """Normalized probabilists' Hermite polynomials He_k(x)/sqrt(k!), k = 0..degree."""
    out = [np.ones_like(x)]
    if degree >= 1:
        out.append(x.copy())
    for k in range(2, degree + 1):
        out.append(x * out[k - 1] - (k - 1) * out[k - 2])
    return [p / math.sqrt(math.factorial(k)) for k, p in enumerate(out)]


def basis(b, t, degree):
    """Design matrix (M, K) from B(t) with shape (M, m); constant only at t = 0."""
    count, m = b.shape
    if t <= 0.0 or degree == 0:
        return np.ones((count, 1))
    x = b / math.sqrt(t)
    polys = [_hermite(x[:, k], degree) for k in range(m)]
    cols = []
    for e in _exponents(m, degree):
        col = np.ones(count)
        for k, p in enumerate(e):
            if p:
                col = col * polys[k][p]
        cols.append(col)
    return np.stack(cols, axis=1)


def _fit(design, target, reg: RegressionConfig):
    """Ridge least squares (intercept unpenalized). Returns (coef, used_fallback)."""
    count, k = design.shape
    gram = design.T @ design / count
    rhs = design.T @ target / count
    penalty = np.ones(k)
    penalty[0] = 0.0
    fallback = False
    system = gram + reg.ridge * np.diag(penalty)
    if k > 1 and np.linalg.cond(system) > reg.max_condition:
        system = gram + max(reg.fallback_ridge, reg.ridge) * np.diag(penalty)
        fallback = True
    return np.linalg.solve(system, rhs), fallback


def _step_values(design, ccoef, zcoef, driver, t, h, d, m, picard):
    cont = design @ ccoef
    z = (design @ zcoef).reshape(-1, d, m)
    y = cont
    for _ in range(picard):
        fy = driver(t, y, z)
        y = cont + h * fy
    return y, z, fy


def solve_bsde(driver: Driver, xi: TerminalCondition, ensemble: PathEnsemble,
               reg: RegressionConfig = RegressionConfig(), picard_iters: int = 3) -> SolutionPair:
    """Backward LSMC solve; see the module docstring for the scheme."""
    if driver.lipschitz_constant is None or not np.isfinite(driver.lipschitz_constant):
        raise NonLipschitzDriverError(f"driver {driver.name!r} has no Lipschitz constant; mollify it first")
    if not xi.markovian:
        raise ValueError("terminal condition must depend on B(1) only")
    if xi.d != driver.d:
        raise ValueError("terminal condition and driver disagree on d")
    if ensemble.dims != driver.m:
        raise ValueError("ensemble dimension does not match driver m")
    if picard_iters < 1:
        raise ValueError("picard_iters must be >= 1")
    d, m = driver.d, driver.m
    grid = ensemble.grid
    n, h, count = grid.steps, grid.step, ensemble.count
    warn = []
    if h * driver.lipschitz_constant >= 1.0:
        msg = f"step*L = {h * driver.lipschitz_constant:.3g} >= 1; Picard sweeps may not contract"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        warn.append(msg)

    Y = np.empty((count, n + 1, d))
    Z = np.empty((count, n, d, m))
    Y[:, n] = xi(ensemble)
    coefs = [None] * n
    fsum = np.zeros((count, d))
    fallbacks = 0
    for j in range(n - 1, -1, -1):
        design = basis(ensemble.values[:, j], grid.points[j], reg.degree)
        ccoef, fb1 = _fit(design, Y[:, j + 1], reg)
        resid = Y[:, j + 1] - design @ ccoef
        ztarget = (resid[:, :, None] * ensemble.increments[:, j, None, :]).reshape(count, d * m) / h
        zcoef, fb2 = _fit(design, ztarget, reg)
        fallbacks += int(fb1) + int(fb2)
        coefs[j] = (ccoef, zcoef)
        Y[:, j], Z[:, j], fy = _step_values(design, ccoef, zcoef, driver, grid.points[j], h, d, m, picard_iters)
        fsum += h * fy

    # Y_0 = E[xi + sum_j h f_j] with f_j the driver value used in step j
    estimator = Y[:, n] + fsum
    meta = {
        "solver": "lsmc",
        "driver": driver.name,
        "terminal": xi.name,
        "degree": reg.degree,
        "ridge": reg.ridge,
        "picard_iters": int(picard_iters),
        "ridge_fallbacks": fallbacks,
        "lipschitz_constant": float(driver.lipschitz_constant),
        "fingerprint": ensemble.fingerprint,
        "y0": Y[:, 0].mean(axis=0),
        "y0_stderr": estimator.std(axis=0, ddof=1) / math.sqrt(count) if count > 1 else np.zeros(d),
        "C_sup": float(np.max(np.abs(Y))),
        "warnings": warn,
        "coefficients": coefs,
    }
    return SolutionPair(AdaptedProcess(grid, Y), AdaptedProcess(grid, Z), meta)


def replay(sol: SolutionPair, driver: Driver, ensemble: PathEnsemble):
    """Re-evaluate (Y, Z) at indices < N on ``ensemble`` from the stored coefficients.

    Returns Y with shape (M, N, d) and Z with shape (M, N, d, m). Values
    at index j read only B(t_j), so masking the future leaves them intact.
    """
    meta = sol.meta
    grid = ensemble.grid
    n, h = grid.steps, grid.step
    d, m = driver.d, driver.m
    Y = np.empty((ensemble.count, n, d))
    Z = np.empty((ensemble.count, n, d, m))
    for j in range(n):
        design = basis(ensemble.values[:, j], grid.points[j], meta["degree"])
        ccoef, zcoef = meta["coefficients"][j]
        Y[:, j], Z[:, j], _ = _step_values(design, ccoef, zcoef, driver, grid.points[j], h, d, m,
                                           meta["picard_iters"])
    return Y, Z


def solve_deterministic(phi: Modulus, epsilon: float, a: float, grid: TimeGrid, d: int = 1,
                        m: int = 1) -> SolutionPair:
    """y = x, z = 0 with x(t) = a + int_t^1 (phi(x) + epsilon) ds solved by RK4.

    Arrays carry a single path (shape (1, ...)) and broadcast against any
    ensemble.
    """
    if a < 0:
        raise ValueError("a must be non-negative")
    ode = solve_backward(BackwardOdeProblem(phi, float(epsilon), float(a), 1.0, 1.0), grid.steps)
    Y = np.repeat(ode.values[None, :, None], d, axis=2)
    Z = np.zeros((1, grid.steps, d, m))
    meta = {
        "solver": "deterministic",
        "driver": deterministic_driver(phi, epsilon, d, m).name,
        "y0": Y[:, 0].mean(axis=0),
        "y0_stderr": np.zeros(d),
        "C_sup": float(np.max(np.abs(Y))),
        "fingerprint": None,
    }
    return SolutionPair(AdaptedProcess(grid, Y), AdaptedProcess(grid, Z), meta)


@dataclass(frozen=True)
class ResidualReport:
    rms: float
    rms_by_time: np.ndarray
    max_abs: float


def residual_check(sol: SolutionPair, driver: Driver, xi: TerminalCondition,
                   ensemble: PathEnsemble) -> ResidualReport:
    """Defect Y_j - [xi + sum_{i>=j} h f_i - sum_{i>=j} Z_i dB_i] per path and time."""
    grid = ensemble.grid
    n, h, count = grid.steps, grid.step, ensemble.count
    if sol.Y.values.shape[1] != n + 1:
        raise ValueError("solution grid does not match the ensemble")
    Y = np.broadcast_to(sol.Y.values, (count,) + sol.Y.values.shape[1:])
    Z = np.broadcast_to(sol.Z.values, (count,) + sol.Z.values.shape[1:])
    terminal = xi(ensemble)
    F = np.zeros((count, n + 1, Y.shape[2]))
    for j in range(n):
        F[:, j + 1] = F[:, j] + h * driver(grid.points[j], Y[:, j], Z[:, j])
    contrib = (Z * ensemble.increments[:, :, None, :]).sum(axis=-1)
    I = np.zeros_like(F)
    np.cumsum(contrib, axis=1, out=I[:, 1:])
    defect = (Y - terminal[:, None, :]) - (F[:, n:] - F) + (I[:, n:] - I)
    sq = np.einsum("pjd,pjd->pj", defect, defect)
    return ResidualReport(float(np.sqrt(sq.mean())), np.sqrt(sq.mean(axis=0)), float(np.sqrt(sq.max())))


@dataclass(frozen=True)
class Step1Report:
    sup_y_sq: float
    z_energy: float
    bound: float
    slack_y: float
    slack_z: float
    passed: bool


def step1_bound(eps, K):
    return (eps ** 2 + 4.0 * K ** 2) * math.exp(K ** 2 + 2.0 * K + 2.0)


def step1_uniform_bound(solA: SolutionPair, solB: SolutionPair, eps_pair: float, K: float) -> Step1Report:
    """sup |Y_A - Y_B|^2 and mean sum ||Z_A - Z_B||^2 h against (eps^2 + 4K^2) e^{K^2+2K+2}.

    Slack factors are bound / observed (inf when observed is 0).
    """
    if solA.meta.get("fingerprint") != solB.meta.get("fingerprint"):
        raise ValueError("solutions were computed on different ensembles")
    grid = solA.Y.grid
    dy = solA.Y.values - solB.Y.values
    dz = solA.Z.values - solB.Z.values
    sup_y = float(np.max(np.einsum("pjd,pjd->pj", dy, dy)))
    z_energy = float(np.mean(np.sum(dz ** 2, axis=(2, 3)).sum(axis=1) * grid.step))
    bound = step1_bound(eps_pair, K)

    def slack(v):
        return float(bound / v) if v > 0 else math.inf

    return Step1Report(sup_y, z_energy, bound, slack(sup_y), slack(z_energy),
                       bool(sup_y <= bound and z_energy <= bound))
