"""Command-line entry point: ``bsdelab {solve,converge,envelope,decompose,girsanov}``.

Every run prints its full config (including the seed) and writes it to
``config.yaml`` in the output directory. The exit status is 1 when any
asserted invariant failed and 0 otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .decomposition import coverage_check, decompose_levels, pathological_h, segment_rows
from .envelope import BackwardOdeProblem, envelope_at, solve_backward, vanish_limit_check
from .errors import StageError
from .girsanov import density
from .harness import (DEFAULTS, ExperimentConfig, dump_config, export, girsanov_stage, load_config,
                      run_convergence, write_csv, write_json)
from .moduli import lipschitz_regularize, modulus_by_name
from .mollify import mollify, probe_distance
from .solver import replay, residual_check, solve_bsde
from .stochastic import AdaptedProcess, check_adapted, integrate_abs, make_grid, sample_brownian


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig(dict(DEFAULTS))
    raw = cfg.to_dict()
    if args.seed is not None:
        raw["ensemble"]["seed"] = int(args.seed)
    if args.out is not None:
        raw["output_dir"] = args.out
    return ExperimentConfig(raw)


def _prepare(cfg):
    out = cfg.raw["output_dir"]
    os.makedirs(out, exist_ok=True)
    text = dump_config(cfg)
    with open(os.path.join(out, "config.yaml"), "w") as fh:
        fh.write(text)
    print(f"# seed: {cfg.seed}")
    print(text, end="")
    return out


def _finish(out, summary, invariants):
    summary = dict(summary)
    summary["invariants"] = invariants
    summary["passed"] = all(invariants.values())
    write_json(os.path.join(out, "summary.json"), summary)
    for name, ok in invariants.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if summary["passed"] else 1


def _lipschitz_driver(cfg, n=None):
    base = cfg.driver()
    if base.lipschitz_constant is not None and n is None:
        return base
    return mollify(base, cfg.kernel(), int(n or cfg.ladder[-1]))


def cmd_solve(cfg):
    out = _prepare(cfg)
    f = _lipschitz_driver(cfg, cfg.raw["solve"]["n"])
    xi, ens = cfg.terminal(), cfg.ensemble()
    sol = solve_bsde(f, xi, ens, cfg.regression(), cfg.picard)
    res = residual_check(sol, f, xi, ens)
    Yr, _ = replay(sol, f, ens)
    invariants = {
        "terminal_pin": bool(np.array_equal(sol.Y.values[:, -1], xi(ens))),
        "replay_matches": bool(np.array_equal(Yr, sol.Y.values[:, :-1])),
        "adapted": bool(check_adapted(lambda e: replay(sol, f, e)[0], ens)),
        "residual_finite": bool(np.isfinite(res.rms)),
    }
    keep = min(int(cfg.raw["solve"]["export_paths"]), ens.count)
    d, m = f.d, f.m
    Y, Z = sol.Y.values, sol.Z.values
    n = ens.grid.steps
    rows = []
    for p in range(keep):
        for j, t in enumerate(ens.grid.points):
            zrow = Z[p, j].ravel().tolist() if j < n else [float("nan")] * (d * m)
            rows.append([p, j, t] + Y[p, j].tolist() + zrow)
    header = ["path", "index", "t"] + [f"y{i}" for i in range(d)] + [f"z{i}{k}" for i in range(d) for k in range(m)]
    write_csv(os.path.join(out, "solution.csv"), header, rows)
    summary = {"config": cfg.to_dict(), "seed": cfg.seed, "driver": f.name, "y0": sol.meta["y0"],
               "y0_stderr": sol.meta["y0_stderr"], "residual_rms": res.rms, "ridge_fallbacks": sol.meta["ridge_fallbacks"],
               "C_sup": sol.meta["C_sup"]}
    return _finish(out, summary, invariants)


def cmd_converge(cfg):
    out = _prepare(cfg)
    report = run_convergence(cfg)
    export(report, out)
    for name, ok in report.stages.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if report.passed else 1


def cmd_envelope(cfg):
    out = _prepare(cfg)
    e = cfg.raw["envelope"]
    phi = modulus_by_name(e["phi"]["name"], **(e["phi"].get("params") or {}))
    problem = BackwardOdeProblem(phi, float(e["epsilon"]), float(e["gamma"]), 1.0, float(e["multiplier"]))
    ode = solve_backward(problem, int(e["steps"]))
    write_csv(os.path.join(out, "ode.csv"), ["t", "u"], zip(ode.times, ode.values))
    invariants = {
        "ode_terminal": bool(ode.values[-1] == problem.gamma),
        "ode_non_increasing": bool(np.all(np.diff(ode.values) <= 0)),
    }

    v = e["vanish"]
    van = vanish_limit_check(phi, float(e["multiplier"]), v["gammas"], v["epsilons"], float(v["threshold"]),
                             int(e["steps"]))
    write_csv(os.path.join(out, "vanish.csv"), ["gamma", "epsilon", "u0"],
              [[g, eps, van.table[i, j]] for i, g in enumerate(van.gammas) for j, eps in enumerate(van.epsilons)])
    invariants["vanish_monotone"] = van.monotone
    if phi.osgood_declared:
        invariants["vanish_below_threshold"] = van.vanished

    xs = np.linspace(0.0, float(e["probe_max"]), 2001)
    rows, prev = [], None
    lip_ok, dom_ok, mono_ok = True, True, True
    for k in sorted(float(k) for k in e["regularize_k"]):
        reg = lipschitz_regularize(phi, k, xs)
        vals, base = reg(xs), phi(xs)
        lip_ok &= bool(np.all(np.abs(np.diff(vals)) <= k * np.diff(xs) * (1 + 1e-9) + 1e-12))
        dom_ok &= bool(np.all(vals >= base - 1e-12))
        if prev is not None:
            mono_ok &= bool(np.all(vals <= prev + 1e-12))
        prev = vals
        rows += [[k, x, b, r] for x, b, r in zip(xs, base, vals)]
    write_csv(os.path.join(out, "regularization.csv"), ["k", "x", "phi", "phi_k"], rows)
    invariants.update({"regularize_lipschitz": lip_ok, "regularize_dominates": dom_ok, "regularize_monotone_k": mono_ok})

    ens = cfg.ensemble()
    X = np.sqrt(np.einsum("pjk,pjk->pj", ens.values, ens.values))
    tau = ens.grid.index_of(float(e["tau"]))
    env = envelope_at(X, tau, BackwardOdeProblem(phi, float(e["epsilon"]), 0.0, 1.0, float(e["multiplier"])),
                      float(X.max()))
    write_csv(os.path.join(out, "envelope.csv"), ["path", "tau", "x_tau", "theta"],
              zip(range(ens.count), ens.grid.points[env.tau], env.x_at_tau, env.theta))
    invariants["envelope_dominates"] = bool(np.all(env.theta >= env.x_at_tau))
    summary = {"config": cfg.to_dict(), "seed": cfg.seed, "u0": ode.initial(), "vanish_final": van.final,
               "vanish_threshold": van.threshold, "gamma0": env.gamma0}
    return _finish(out, summary, invariants)


def _decompose_h(kind, ens, depth):
    if kind == "pathological":
        return pathological_h(ens, depth)
    if kind == "abs_brownian":
        return AdaptedProcess(ens.grid, np.sqrt(np.einsum("pjk,pjk->pj", ens.values, ens.values)))
    if kind == "step":
        h = (ens.grid.points < 0.5).astype(float)
        return AdaptedProcess(ens.grid, np.broadcast_to(h, (ens.count, h.size)))
    raise ValueError(f"unknown h {kind!r}; choose pathological, abs_brownian or step")


def cmd_decompose(cfg):
    out = _prepare(cfg)
    c = cfg.raw["decompose"]
    grid = make_grid(int(c["steps"]))
    ens = sample_brownian(grid, int(cfg.raw["ensemble"]["m"]), int(c["paths"]), cfg.seed)
    H = integrate_abs(_decompose_h(c["h"], ens, int(c["depth"])), grid)
    invariants = {}
    try:
        reports = decompose_levels(H, c["levels"], float(cfg.raw["decomposition"]["flat_tol"]))
        invariants["version_consistency"] = True
    except AssertionError as exc:
        print(f"decompose: {exc}", file=sys.stderr)
        invariants["version_consistency"] = False
        reports = []
    rows = []
    for r in reports:
        for path, label, lo, hi, dh in segment_rows(r):
            rows.append([r.base_level, path, label, lo, hi, grid.points[lo], grid.points[hi], dh])
    write_csv(os.path.join(out, "segments.csv"),
              ["level", "path", "label", "left", "right", "t_left", "t_right", "h_increment"], rows)
    tol = c["coverage_tol"]
    tol = 3.0 * grid.step if tol is None else float(tol)
    summary = {"config": cfg.to_dict(), "seed": cfg.seed, "segments": len(rows)}
    if reports:
        cov = coverage_check(reports, tol)
        write_csv(os.path.join(out, "coverage.csv"), ["path", "covered"], enumerate(cov.covered))
        invariants["coverage"] = cov.passed
        summary["min_coverage"] = float(cov.covered.min())
    return _finish(out, summary, invariants)


def cmd_girsanov(cfg):
    out = _prepare(cfg)
    g = cfg.raw["girsanov"]
    ens = cfg.ensemble()
    c = float(g["constant_eta"])
    const = density(np.full((ens.count, ens.grid.steps, ens.dims), c), ens)
    sig = float(cfg.raw["slack"]["density_sigmas"])
    wmean, wse = const.weighted_mean(ens.terminal())
    invariants = {
        "density_positive": bool(np.all(const.density > 0)),
        "constant_density_mean": bool(abs(const.mean - 1.0) <= sig * const.stderr) if const.stderr > 0
        else const.mean == 1.0,
        "constant_drifted_mean": bool(np.all(np.abs(wmean - c) <= sig * wse)),
    }
    summary = {"config": cfg.to_dict(), "seed": cfg.seed, "constant_eta": c, "density_mean": const.mean,
               "density_stderr": const.stderr, "weighted_terminal_mean": wmean, "weighted_terminal_stderr": wse}

    ladder = cfg.ladder
    pair = g["pair"] or ladder[-2:]
    if len(pair) == 2 and pair[0] != pair[1]:
        base = cfg.driver()
        xi, reg, kernel = cfg.terminal(), cfg.regression(), cfg.kernel()
        fa, fb = mollify(base, kernel, int(pair[0])), mollify(base, kernel, int(pair[1]))
        probes = cfg.raw["probes"]
        eps_pair = sum(probe_distance(f, base, int(probes["distance"]), int(probes["seed"])) for f in (fa, fb))
        sa = solve_bsde(fa, xi, ens, reg, cfg.picard)
        sb = solve_bsde(fb, xi, ens, reg, cfg.picard)
        stage, window, env, dens = girsanov_stage(sa, sb, base, eps_pair, ens, float(cfg.raw["eps0"]),
                                                  float(cfg.raw["slack"]["domination"]),
                                                  float(cfg.raw["decomposition"]["flat_tol"]), sig)
        write_csv(os.path.join(out, "windows.csv"), ["path", "left", "right", "theta"],
                  zip(range(ens.count), window.left, window.right, env.theta))
        write_csv(os.path.join(out, "density.csv"), ["path", "log_density", "density"],
                  zip(range(ens.count), dens.log_density, dens.density))
        summary["pair"] = [int(pair[0]), int(pair[1])]
        summary["window_stage"] = stage
        invariants["domination"] = stage["domination_passed"]
        invariants["window_density_mean"] = stage["density_passed"]
    return _finish(out, summary, invariants)


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "envelope": cmd_envelope,
    "decompose": cmd_decompose,
    "girsanov": cmd_girsanov,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="bsdelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "solve one Lipschitz (or mollified) BSDE",
        "converge": "run the full mollification-ladder experiment",
        "envelope": "backward ODE, vanishing limit, regularization and envelope suite",
        "decompose": "flat/increasing path decomposition suite",
        "girsanov": "Novikov window and density suite",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML config file (defaults are used for missing keys)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="override ensemble.seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
