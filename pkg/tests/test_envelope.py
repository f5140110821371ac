from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from bsdelab import (BackwardOdeProblem, envelope_at, envelope_scaling_probe, global_dominator, linear_modulus,
                     osgood_modulus, scaling_continuity, solve_backward, sqrt_modulus, vanish_limit_check)
from bsdelab.moduli import clipped_linear_modulus


def _ivp_u0(phi, eps, gamma, mult=1.0):
    """Independent route: integrate s = 1 - t forward with an adaptive solver."""
    sol = solve_ivp(lambda s, v: mult * (phi(np.maximum(v, 0.0)) + eps), (0.0, 1.0), [gamma], rtol=1e-12,
                    atol=1e-14, method="DOP853")
    return sol.y[0, -1]


@pytest.mark.parametrize("gamma,eps,mult", [(1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (0.3, 0.2, 3.0), (2.0, 0.05, 1.0)])
def test_linear_closed_form(gamma, eps, mult):
    sol = solve_backward(BackwardOdeProblem(linear_modulus(), eps, gamma, 1.0, mult), 1000)
    t = sol.times
    want = (gamma + eps) * np.exp(mult * (1 - t)) - eps
    np.testing.assert_allclose(sol.values, want, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("phi,eps,gamma", [
    (osgood_modulus(), 0.1, 0.0),
    (osgood_modulus(), 0.0, 0.01),
    (sqrt_modulus(), 0.05, 0.2),
    (clipped_linear_modulus(2.0, 1.0), 0.0, 0.1),
])
def test_rk4_matches_adaptive_solver(phi, eps, gamma):
    u0 = solve_backward(BackwardOdeProblem(phi, eps, gamma), 1000).initial()
    assert u0 == pytest.approx(_ivp_u0(phi, eps, gamma), abs=1e-6)


def test_osgood_log_closed_form():
    # w = ln u solves (1 - w)' = 1 - w while u <= 1
    g = 1e-4
    u0 = solve_backward(BackwardOdeProblem(osgood_modulus(), 0.0, g), 1000).initial()
    assert u0 == pytest.approx(np.exp(1 - (1 - np.log(g)) / np.e), rel=1e-8)


def test_sqrt_closed_form():
    u0 = solve_backward(BackwardOdeProblem(sqrt_modulus(), 0.0, 0.04), 1000).initial()
    assert u0 == pytest.approx((0.2 + 0.5) ** 2, abs=1e-10)


def test_solution_non_increasing_and_terminal():
    sol = solve_backward(BackwardOdeProblem(osgood_modulus(), 0.1, 0.5), 200)
    assert sol.values[-1] == 0.5
    assert np.all(np.diff(sol.values) <= 0)


def test_problem_validation():
    with pytest.raises(ValueError):
        BackwardOdeProblem(linear_modulus(), -1.0)
    with pytest.raises(ValueError):
        BackwardOdeProblem(linear_modulus(), multiplier=0.5)
    with pytest.raises(ValueError):
        solve_backward(BackwardOdeProblem(linear_modulus()), 0)


@given(st.floats(0, 2), st.floats(0, 2), st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_gamma_and_eps(g1, g2, e1, e2):
    phi = osgood_modulus()
    lo_g, hi_g = sorted((g1, g2))
    lo_e, hi_e = sorted((e1, e2))
    a = solve_backward(BackwardOdeProblem(phi, lo_e, lo_g), 100).values
    b = solve_backward(BackwardOdeProblem(phi, hi_e, hi_g), 100).values
    assert np.all(a <= b)


@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 1))
def test_lipschitz_continuity_in_gamma(g1, g2, eps):
    # for phi = id the flow map is exactly multiplication by e^{1-t}
    a = solve_backward(BackwardOdeProblem(linear_modulus(), eps, g1), 100).values
    b = solve_backward(BackwardOdeProblem(linear_modulus(), eps, g2), 100).values
    assert np.max(np.abs(a - b)) <= np.e * abs(g1 - g2) * (1 + 1e-9) + 1e-14


def test_vanish_osgood_true_values():
    rep = vanish_limit_check(osgood_modulus(), 1.0, [1e-2, 1e-4, 1e-6, 1e-8], [1e-2, 1e-4, 1e-6, 1e-8])
    assert rep.monotone
    # the scipy route gives the same limit value; it does not go below 1e-3 at 1e-8
    assert rep.final == pytest.approx(_ivp_u0(osgood_modulus(), 1e-8, 1e-8), rel=1e-5)
    assert rep.final == pytest.approx(2.19e-3, abs=2e-5)
    assert rep.final < rep.table[0, 0]


def test_vanish_sqrt_stays_away():
    rep = vanish_limit_check(sqrt_modulus(), 1.0, [1e-2, 1e-4, 1e-8], [1e-2, 1e-4, 1e-8], threshold=1e-3)
    assert not rep.vanished
    assert rep.final > 0.25


def test_vanish_rejects_unsorted():
    with pytest.raises(ValueError):
        vanish_limit_check(sqrt_modulus(), 1.0, [1e-4, 1e-2], [1e-2, 1e-4])


# envelopes


def test_envelope_constant_fixture():
    X = np.ones((3, 1001))
    env = envelope_at(X, 500, BackwardOdeProblem(linear_modulus()), 2.0)
    assert env.gamma0 == pytest.approx(np.exp(-0.5), abs=1e-8)
    np.testing.assert_allclose(env.theta, 1.0, atol=1e-8)


def test_envelope_zero_at_horizon():
    X = np.abs(np.random.default_rng(0).standard_normal((5, 101)))
    X[:, -1] = 0.0
    env = envelope_at(X, 100, BackwardOdeProblem(osgood_modulus()), float(X.max()))
    assert env.gamma0 == 0.0
    assert np.all(env.theta == 0.0)


def test_envelope_per_path_tau_brute_force(rng):
    X = rng.uniform(0, 2, size=(40, 201))
    tau = rng.integers(0, 201, size=40)
    env = envelope_at(X, tau, BackwardOdeProblem(linear_modulus()), 2.0)
    t = tau / 200
    want = np.max(X[np.arange(40), tau] * np.exp(-(1 - t)))
    assert env.gamma0 == pytest.approx(want, abs=1e-9)
    assert np.all(env.theta >= env.x_at_tau)


@given(st.integers(0, 10 ** 6))
def test_envelope_dominates_and_is_minimal(seed):
    r = np.random.default_rng(seed)
    X = r.uniform(0, 1, size=(10, 51))
    tau = r.integers(0, 51, size=10)
    problem = BackwardOdeProblem(osgood_modulus(), 0.05)
    env = envelope_at(X, tau, problem, 1.0)
    assert np.all(env.theta >= env.x_at_tau)
    if env.gamma0 > 1e-9:
        below = solve_backward(replace(problem, gamma=env.gamma0 - 1e-9), 50).values[tau]
        assert np.any(below < env.x_at_tau)


def test_envelope_stable_under_tau_shift():
    # single path: theta moves by at most the oscillation of X plus one ODE increment
    X = np.abs(np.sin(np.linspace(0, 6, 201)))[None, :]
    problem = BackwardOdeProblem(osgood_modulus(), 0.1)
    a = envelope_at(X, 100, problem, 1.0)
    b = envelope_at(X, 101, problem, 1.0)
    ode_step = a.ode.values[100] - a.ode.values[101]
    assert abs(a.theta[0] - b.theta[0]) <= abs(X[0, 101] - X[0, 100]) + ode_step + 1e-9


def test_envelope_input_checks():
    problem = BackwardOdeProblem(linear_modulus())
    with pytest.raises(ValueError):
        envelope_at(-np.ones((2, 11)), 5, problem, 1.0)
    with pytest.raises(ValueError):
        envelope_at(np.ones((2, 11)), 5, problem, 0.5)
    with pytest.raises(ValueError):
        envelope_at(np.ones((2, 11)), 12, problem, 2.0)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 3.0])
def test_scaling_homogeneous(alpha):
    X = np.random.default_rng(1).uniform(0, 1, size=(5, 101))
    rep = envelope_scaling_probe(X, 60, BackwardOdeProblem(linear_modulus()), alpha, 1.0)
    assert rep.homogeneous and rep.scaling_holds


def test_scaling_not_asserted_for_osgood():
    X = np.random.default_rng(1).uniform(0, 1, size=(5, 101))
    rep = envelope_scaling_probe(X, 60, BackwardOdeProblem(osgood_modulus(), 0.1), 2.0, 1.0)
    assert not rep.homogeneous and not rep.scaling_holds


def test_scaling_continuity_alpha_to_one():
    X = np.random.default_rng(2).uniform(0, 1, size=(5, 101))
    gaps, decreasing = scaling_continuity(X, 60, BackwardOdeProblem(osgood_modulus(), 0.1),
                                          [1.5, 1.1, 1.01, 1.001], 1.0)
    assert decreasing
    assert gaps[-1] < 1e-3


@pytest.mark.parametrize("d", [1, 2, 3])
def test_global_dominator_linear_closed_form(d):
    v = global_dominator(linear_modulus(), 0.1, d, 1000)
    assert v.initial() == pytest.approx(0.1 * (np.exp(d + 1) - 1), rel=1e-10)
    assert v.values[-1] == 0.0


def test_global_dominator_collapses_for_osgood():
    vals = [global_dominator(osgood_modulus(), e, 2, 500).initial() for e in (1e-1, 1e-3, 1e-6)]
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(ValueError):
        global_dominator(osgood_modulus(), 0.0, 2, 10)
