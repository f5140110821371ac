"""Frozen worked examples with closed-form or brute-force oracles."""

import numpy as np
import pytest

from bsdelab import (BackwardOdeProblem, Driver, ExperimentConfig, GirsanovWindow, MollifierKernel, SolutionPair,
                     builtin_catalog, coverage_check, decompose, drift_eta, envelope_scaling_probe, global_dominator,
                     integrate_abs, ito_sum, level_hitting, linear_modulus, make_grid, mollify, novikov_window,
                     osgood_check, osgood_modulus, pathological_h, probe_distance, run_convergence,
                     run_uniqueness_probe, sample_brownian, signed_z_combination, solve_bsde, solve_backward,
                     solve_deterministic, sqrt_modulus, step1_uniform_bound, terminal_condition, vanish_limit_check,
                     verify_moduli, zero_modulus, domination_check)
from bsdelab.stochastic import AdaptedProcess

M = 100_000


@pytest.fixture(scope="module")
def big_ensemble():
    return sample_brownian(make_grid(10), 1, M, seed=17)


def test_terminal_mean_and_variance(big_ensemble):
    b1 = big_ensemble.terminal()[:, 0]
    assert abs(b1.mean()) <= 3 / np.sqrt(M)
    assert abs(b1.var(ddof=1) - 1.0) <= 3 * np.sqrt(2) / np.sqrt(M)


def test_integral_of_t():
    g = make_grid(1000)
    H = integrate_abs(g.points[None, :], g).values
    assert abs(H[0, -1] - 0.5) <= 1 / 1000


def test_ito_sum_of_one_is_centred(big_ensemble):
    s = ito_sum(np.ones((M, 10, 1)), big_ensemble)
    assert abs(s.mean()) <= 3 / np.sqrt(M)


def test_osgood_check_examples():
    lin = osgood_check(linear_modulus())
    assert lin.verdict and lin.integrals[-1] == pytest.approx(np.log(1e8), rel=1e-9)
    sq = osgood_check(sqrt_modulus())
    assert not sq.verdict and sq.integrals[-1] == pytest.approx(2 * (1 - np.sqrt(1e-8)), rel=1e-9)
    assert osgood_check(osgood_modulus()).verdict


def test_verify_moduli_sine_and_doubling():
    assert verify_moduli(builtin_catalog("sine"), 5000, 0).violations_y == 0
    doubling = Driver(1, 1, lambda t, y, z: 2.0 * y, linear_modulus(1.0), zero_modulus(), 2.0, False, "2y")
    rep = verify_moduli(doubling, 5000, 0)
    assert rep.violations_y > 0
    assert rep.worst_ratio_y == pytest.approx(2.0, rel=1e-6)


def test_mollified_abs_within_modulus():
    f = builtin_catalog("abs")
    assert probe_distance(mollify(f, MollifierKernel(1.0), 10), f, 2000, 0) <= 0.1


def test_mollified_affine_is_identity():
    f = builtin_catalog("linear", 1, 1, a=0.5, b=0.3)
    assert probe_distance(mollify(f, MollifierKernel(), 5), f, 2000, 0) <= 1e-6


@pytest.mark.parametrize("m", [1, 2, 4])
def test_linear_lipschitz_constant(m):
    assert builtin_catalog("linear", 1, m, a=0.5, b=0.3).lipschitz_constant == max(0.5, 0.3 * np.sqrt(m))


def test_vanish_linear_below_threshold():
    rep = vanish_limit_check(linear_modulus(), 1.0, [1e-2, 1e-4, 1e-6], [1e-2, 1e-4, 1e-6], threshold=1e-5)
    assert rep.vanished
    assert rep.final == pytest.approx(2e-6 * np.e - 1e-6, rel=1e-9)


def test_scaling_doubles_theta():
    rep = envelope_scaling_probe(np.ones((4, 101)), 50, BackwardOdeProblem(linear_modulus()), 2.0, 1.0)
    np.testing.assert_allclose(rep.theta_alpha, 2.0 * rep.theta, rtol=1e-8)
    np.testing.assert_allclose(rep.theta, 1.0, atol=1e-8)


def test_global_dominator_zero_modulus():
    v = global_dominator(zero_modulus(), 0.1, 2, 100)
    np.testing.assert_allclose(v.values, 0.3 * (1 - v.times), atol=1e-14)


def test_global_dominator_identity():
    assert global_dominator(linear_modulus(), 0.1, 2, 1000).initial() == pytest.approx(1.9086, abs=1e-4)


def test_deterministic_constant_integrand():
    g = make_grid(50)
    sol = solve_deterministic(zero_modulus(), 1.0, 0.0, g)
    np.testing.assert_allclose(sol.Y.values[0, :, 0], 1 - g.points, atol=1e-14)


@pytest.mark.filterwarnings("ignore:step\\*L")
def test_step1_mollified_osgood_pair():
    ens = sample_brownian(make_grid(50), 1, 5000, seed=4)
    f = builtin_catalog("osgood")
    xi = terminal_condition("brownian")
    k = MollifierKernel()
    fa, fb = mollify(f, k, 8), mollify(f, k, 16)
    sa, sb = solve_bsde(fa, xi, ens), solve_bsde(fb, xi, ens)
    rep = step1_uniform_bound(sa, sb, fa.closeness_bound + fb.closeness_bound, 1.0)
    assert rep.passed and rep.slack_y > 1 and rep.slack_z > 1


def test_level_hitting_square():
    g = make_grid(1000)
    hit = level_hitting(g.points[None, :] ** 2, 0.25)
    assert abs(g.points[hit.time[0]] - 0.5) <= g.step


@pytest.mark.parametrize("t,inside", [(0.75, True), (0.25, False)])
def test_pathological_depth_one(t, inside):
    ens = sample_brownian(make_grid(4), 1, 3, seed=0)
    j = ens.grid.index_of(t)
    h = pathological_h(ens, 1).values[:, j]
    want = np.abs(ens.values[:, j, 0]) + 1 if inside else np.zeros(3)
    np.testing.assert_array_equal(h, want)


def test_step_h_full_coverage():
    g = make_grid(40)
    H = integrate_abs((g.points < 0.5).astype(float)[None, :], g)
    assert coverage_check([decompose(H)], 0.0).covered.tolist() == [1.0]


def test_cancelling_signed_combination():
    g = make_grid(3)
    Ya = np.zeros((1, 4, 2))
    Ya[0, :, 0] = 1.0
    Ya[0, :, 1] = -1.0
    Z = np.zeros((1, 3, 2, 1))
    Za = np.ones((1, 3, 2, 1))
    a = SolutionPair(AdaptedProcess(g, Ya), AdaptedProcess(g, Za), {})
    b = SolutionPair(AdaptedProcess(g, np.zeros((1, 4, 2))), AdaptedProcess(g, Z), {})
    assert not np.any(signed_z_combination(a, b).z)


def test_window_full_when_thresholds_idle():
    win = novikov_window(np.full((5, 10), 0.5), np.full((5, 10), 0.5), (0, 10), 0.1)
    assert win.left.tolist() == [0] * 5 and win.right.tolist() == [10] * 5


def test_window_fraction_grows_as_eps0_shrinks():
    r = np.random.default_rng(0)
    zabs = r.uniform(0.06, 0.5, size=(200, 30))
    zabs[r.uniform(size=zabs.shape) < 0.05] = 0.15
    fracs = [novikov_window(zabs, np.zeros_like(zabs), (0, 30), e).mask(30).mean() for e in (0.2, 0.1, 0.05)]
    assert fracs[0] <= fracs[1] <= fracs[2] == 1.0


def test_eta_magnitude_two():
    win = GirsanovWindow(np.array([2]), np.array([6]), 0.1, 1.0)
    z = np.full((1, 8, 1), 0.5)
    eta = drift_eta(linear_modulus()(np.full((1, 8), 0.5)), z, win, 2.0)
    assert np.abs(eta[0, 2:6, 0]).tolist() == [2.0] * 4
    assert eta[0, :2].tolist() == [[0.0], [0.0]] and eta[0, 6:].tolist() == [[0.0], [0.0]]


@pytest.mark.parametrize("phi", [osgood_modulus(), sqrt_modulus(), linear_modulus()])
@pytest.mark.parametrize("a1,a2", [(1.0, 0.5), (0.3, 0.0), (2.0, 1.9)])
def test_deterministic_domination(phi, a1, a2):
    g = make_grid(200)
    s1, s2 = solve_deterministic(phi, 0.1, a1, g), solve_deterministic(phi, 0.1, a2, g)
    u = solve_backward(BackwardOdeProblem(phi, 0.0, abs(a1 - a2)), 200)
    win = GirsanovWindow(np.array([0]), np.array([200]), 0.1, 1.0)
    # for phi = id the comparison is an equality, so only rounding is allowed
    slack = 1e-12 if phi.name.startswith("linear") else 0.0
    assert domination_check(s1, s2, u, win, slack).passed


def test_linear_ladder_is_near_identity():
    cfg = ExperimentConfig({"driver": {"name": "linear"}, "ensemble": {"steps": 20, "paths": 2000, "d": 1, "m": 1},
                            "ladder": [2, 4, 8], "probes": {"moduli": 500, "distance": 300}})
    rep = run_convergence(cfg)
    assert rep.D_y.max() < 1e-5
    assert rep.residual["original"] == pytest.approx(rep.residual["own"], rel=1e-9)


def test_uniqueness_zero_driver_ridge():
    cfg = ExperimentConfig({"driver": {"name": "zero"}, "ensemble": {"steps": 20, "paths": 2000}})
    rep = run_uniqueness_probe(cfg, 1.0)
    assert rep.ridge[1] == pytest.approx(10 * rep.ridge[0])
    assert rep.y0_gap < 1e-8


@pytest.mark.filterwarnings("ignore:step\\*L")
def test_uniqueness_osgood_picard_doubling():
    cfg = ExperimentConfig({"ensemble": {"steps": 20, "paths": 2000}, "ladder": [2, 4, 8]})
    rep = run_uniqueness_probe(cfg, 1.0)
    assert rep.picard == (3, 6)
    assert rep.passed
