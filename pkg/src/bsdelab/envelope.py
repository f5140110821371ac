"""Backward ODE dominators, phi-envelopes and the global dominator.

All ODEs here have the form

    u(t) = gamma + multiplier * int_t^T (phi(u(s)) + epsilon) ds,   0 <= t <= T,

and are integrated backward from ``T`` with classical RK4. The integrand is
non-negative, so the discrete solution is non-increasing in t and
``u(t) >= gamma`` holds exactly in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .moduli import Modulus
from .stochastic import AdaptedProcess, stopping_time


@dataclass(frozen=True)
class BackwardOdeProblem:
    phi: Modulus
    epsilon: float = 0.0
    gamma: float = 0.0
    terminal_time: float = 1.0
    multiplier: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0 or self.gamma < 0:
            raise ValueError("epsilon and gamma must be non-negative")
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        if not 0.0 <= self.terminal_time <= 1.0:
            raise ValueError("terminal_time must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class OdeSolution:
    times: np.ndarray
    values: np.ndarray
    problem: BackwardOdeProblem

    def at_index(self, j):
        return self.values[j]

    def initial(self) -> float:
        return float(self.values[0])


def _rk4(phi, eps, mult, gammas, horizon, steps):
    """Integrate for a batch of terminal values; returns (steps+1, G), row j at t_j."""
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    out = np.empty((steps + 1, g.size))
    h = horizon / steps

    def rhs(v):
        return mult * (phi(v) + eps)

    v = g.copy()
    out[steps] = v
    for k in range(steps - 1, -1, -1):
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * h * k1)
        k3 = rhs(v + 0.5 * h * k2)
        k4 = rhs(v + h * k3)
        v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k] = v
    return out


def solve_backward(problem: BackwardOdeProblem, steps: int) -> OdeSolution:
    """RK4 backward from ``terminal_time`` with ``steps`` uniform steps."""
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    steps = int(steps)
    vals = _rk4(problem.phi, problem.epsilon, problem.multiplier, problem.gamma, problem.terminal_time, steps)
    times = np.linspace(0.0, problem.terminal_time, steps + 1)
    return OdeSolution(times, vals[:, 0], problem)


@dataclass(frozen=True)
class VanishReport:
    gammas: np.ndarray
    epsilons: np.ndarray
    table: np.ndarray  # u(0) with rows over gamma, columns over epsilon
    monotone: bool
    final: float
    minimum: float
    threshold: float
    vanished: bool


def vanish_limit_check(phi: Modulus, multiplier: float = 1.0, gamma_seq=(1e-2, 1e-4, 1e-6),
                       eps_seq=(1e-2, 1e-4, 1e-6), threshold: float = 1e-3, steps: int = 1000) -> VanishReport:
    """Tabulate u^{gamma,eps}(0) over the double sequence.

    ``vanished`` is true when the value at the last (gamma, eps) pair is below
    ``threshold``. Non-Osgood moduli are expected to report ``vanished=False``.
    """
    g = np.asarray(gamma_seq, dtype=float)
    e = np.asarray(eps_seq, dtype=float)
    if np.any(np.diff(g) >= 0) or np.any(np.diff(e) >= 0) or np.any(g < 0) or np.any(e < 0):
        raise ValueError("gamma_seq and eps_seq must be strictly decreasing and non-negative")
    table = np.empty((g.size, e.size))
    for c, eps in enumerate(e):
        table[:, c] = _rk4(phi, eps, multiplier, g, 1.0, steps)[0]
    monotone = bool(np.all(np.diff(table, axis=0) <= 0) and np.all(np.diff(table, axis=1) <= 0))
    final = float(table[-1, -1])
    return VanishReport(g, e, table, monotone, final, float(table.min()), float(threshold),
                        bool(final < threshold))


@dataclass(frozen=True, eq=False)
class Envelope:
    gamma0: float
    theta: np.ndarray
    tau: np.ndarray
    x_at_tau: np.ndarray
    problem: BackwardOdeProblem
    ode: OdeSolution


def _values(x):
    return x.values if isinstance(x, AdaptedProcess) else np.asarray(x, dtype=float)


def envelope_at(X, tau, problem: BackwardOdeProblem, bound_C: float, rounds: int = 64,
                batch: int = 32, tol: float = 1e-10) -> Envelope:
    """Smallest gamma with u^gamma(tau) >= X(tau) on every path, and theta = u^{gamma0}(tau).

    ``X`` is (M, N+1) on a uniform grid of [0, 1]; the ODE uses that grid's
    step and terminal time 1. Because u^gamma(t) is non-decreasing in gamma,
    feasibility is monotone and [0, bound_C] is searched by multisection
    (``batch`` trial values per round) down to width ``tol``. gamma = 0 is
    tried first so that exactly-zero envelopes come out exact.
    """
    x = _values(X)
    if x.ndim != 2:
        raise ValueError("X must be scalar per path: shape (M, N+1)")
    count, npts = x.shape
    steps = npts - 1
    t_idx = stopping_time(tau, count)
    if np.any(t_idx < 0) or np.any(t_idx > steps):
        raise ValueError("tau lies outside the grid of X")
    if np.any(x < 0):
        raise ValueError("X must be non-negative")
    if np.nanmax(x) > bound_C:
        raise ValueError(f"X exceeds bound_C={bound_C:g}")
    xt = x[np.arange(count), t_idx]
    # per distinct stopping index, only the largest target matters
    uniq, inv = np.unique(t_idx, return_inverse=True)
    need = np.full(uniq.size, -np.inf)
    np.maximum.at(need, inv.ravel(), xt)

    def solve(gs):
        return _rk4(problem.phi, problem.epsilon, problem.multiplier, gs, 1.0, steps)

    def feasible(gs):
        return np.all(solve(gs)[uniq] >= need[:, None], axis=0)

    if feasible(np.array([0.0]))[0]:
        gamma0 = 0.0
    else:
        lo, hi = 0.0, float(bound_C)
        if not feasible(np.array([hi]))[0]:
            raise RuntimeError("bound_C is not feasible; X is not bounded by bound_C")
        for _ in range(rounds):
            if hi - lo <= tol:
                break
            trial = np.linspace(lo, hi, batch + 2)[1:-1]
            ok = feasible(trial)
            first = int(np.argmax(ok)) if ok.any() else batch
            hi = float(trial[first]) if first < batch else hi
            lo = float(trial[first - 1]) if first > 0 else lo
        gamma0 = hi
    ode = solve_backward(replace(problem, gamma=gamma0, terminal_time=1.0), steps)
    theta = ode.values[t_idx]
    if np.any(theta < xt):
        raise AssertionError("envelope fails to dominate X at tau")
    return Envelope(float(gamma0), theta, t_idx, xt, ode.problem, ode)


@dataclass(frozen=True)
class ScalingReport:
    alpha: float
    theta: np.ndarray
    theta_alpha: np.ndarray
    ratio: np.ndarray
    gap: float
    homogeneous: bool
    scaling_holds: bool


def _is_homogeneous(problem):
    if problem.epsilon != 0.0:
        return False
    x = np.geomspace(1e-6, 1e3, 50)
    return bool(np.allclose(problem.phi(2.0 * x), 2.0 * problem.phi(x), rtol=1e-14, atol=0.0))


def envelope_scaling_probe(X, tau, problem: BackwardOdeProblem, alpha: float, bound_C: float) -> ScalingReport:
    """Compare the envelopes of X and alpha*X.

    theta_alpha = alpha*theta is only expected for positively homogeneous
    dynamics (epsilon = 0 and phi(2x) = 2 phi(x)); ``scaling_holds`` is
    asserted only there. ``gap`` = max |theta_alpha - theta| feeds the
    alpha -> 1 continuity check.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = _values(X)
    base = envelope_at(x, tau, problem, bound_C)
    scaled = envelope_at(alpha * x, tau, problem, bound_C * max(alpha, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(base.theta > 0, scaled.theta / base.theta, np.nan)
    homog = _is_homogeneous(problem)
    holds = bool(np.allclose(scaled.theta, alpha * base.theta, rtol=1e-8, atol=1e-8)) if homog else False
    return ScalingReport(float(alpha), base.theta, scaled.theta, ratio,
                         float(np.max(np.abs(scaled.theta - base.theta))), homog, holds)


def scaling_continuity(X, tau, problem: BackwardOdeProblem, alphas, bound_C: float):
    """Gaps |theta_alpha - theta| along a sequence alpha -> 1; returns (gaps, decreasing)."""
    gaps = np.array([envelope_scaling_probe(X, tau, problem, a, bound_C).gap for a in alphas])
    return gaps, bool(np.all(np.diff(gaps) < 0))


def global_dominator(phi: Modulus, epsilon: float, d: int, steps: int) -> OdeSolution:
    """V(t) = (d+1) int_t^1 (phi(V) + epsilon) ds with V(1) = 0."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return solve_backward(BackwardOdeProblem(phi, float(epsilon), 0.0, 1.0, float(d + 1)), steps)
