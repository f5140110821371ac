"""Convergence experiment over a mollification ladder, plus config and export.

Every bound checked here is a statement about Monte Carlo approximations on
a finite grid, so each inequality carries an explicit slack taken from the
config rather than a hidden tolerance.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .decomposition import INCREASING, decompose
from .drivers import Driver, builtin_catalog, terminal_condition, verify_moduli
from .envelope import BackwardOdeProblem, envelope_at, global_dominator
from .errors import StageError
from .girsanov import density, domination_check, drift_eta, novikov_window, signed_z_combination
from .moduli import osgood_check
from .mollify import MollifierKernel, mollify, probe_distance
from .solver import RegressionConfig, residual_check, solve_bsde, step1_uniform_bound
from .stochastic import make_grid, sample_brownian

DEFAULTS = {
    "driver": {"name": "osgood", "params": {}},
    "terminal": {"name": "brownian", "params": {}},
    "ensemble": {"steps": 200, "paths": 20000, "m": 2, "d": 2, "seed": 20240611},
    "ladder": [4, 8, 16, 32, 64],
    "regression": {"degree": 2, "ridge": 1e-10, "picard_iters": 3},
    "kernel": {"support_radius": 1.0, "quadrature_nodes": 9},
    "epsilon_ladder": [0.5, 0.2, 0.1],
    "eps0": 0.001,
    "slack": {"domination": 0.05, "global": 0.0, "residual_factor": 2.0, "density_sigmas": 3.0,
              "uniqueness": 0.05},
    "probes": {"moduli": 10000, "distance": 2000, "seed": 7},
    "decomposition": {"flat_tol": 1e-12},
    "output_dir": "out",
    "solve": {"n": None, "export_paths": 50},
    "envelope": {
        "phi": {"name": "osgood", "params": {}},
        "epsilon": 0.1,
        "gamma": 0.0,
        "multiplier": 1.0,
        "steps": 1000,
        "tau": 0.5,
        "vanish": {"gammas": [1e-2, 1e-4, 1e-6, 1e-8], "epsilons": [1e-2, 1e-4, 1e-6, 1e-8], "threshold": 5e-3},
        "regularize_k": [2.0, 10.0, 100.0],
        "probe_max": 10.0,
    },
    "decompose": {"h": "pathological", "depth": 3, "levels": [0.0, 0.25, 0.5], "steps": 4096, "paths": 200,
                  "coverage_tol": None},
    "girsanov": {"pair": None, "constant_eta": 1.0},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment settings; ``raw`` keeps the merged mapping for echoing."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.raw = _merge(DEFAULTS, self.raw)
        lad = self.ladder
        if not lad or any(int(n) != n or n < 1 for n in lad) or any(b <= a for a, b in zip(lad, lad[1:])):
            raise ValueError("ladder must be strictly increasing positive integers")
        eps = self.raw["epsilon_ladder"]
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon_ladder must be strictly decreasing and positive")
        if not 0.0 < self.raw["eps0"] < 1.0:
            raise ValueError("eps0 must lie in (0, 1)")
        for k, v in self.raw["slack"].items():
            if v < 0:
                raise ValueError(f"slack.{k} must be non-negative")
        if self.raw["slack"]["residual_factor"] <= 0 or self.raw["decomposition"]["flat_tol"] <= 0:
            raise ValueError("residual_factor and flat_tol must be positive")
        ens = self.raw["ensemble"]
        for key in ("steps", "paths", "m", "d"):
            if int(ens[key]) < 1:
                raise ValueError(f"ensemble.{key} must be >= 1")

    @property
    def ladder(self):
        return [int(n) for n in self.raw["ladder"]]

    @property
    def seed(self):
        return int(self.raw["ensemble"]["seed"])

    def driver(self) -> Driver:
        e = self.raw["ensemble"]
        return builtin_catalog(self.raw["driver"]["name"], int(e["d"]), int(e["m"]),
                               **(self.raw["driver"].get("params") or {}))

    def terminal(self):
        e = self.raw["ensemble"]
        return terminal_condition(self.raw["terminal"]["name"], int(e["d"]), int(e["m"]),
                                  **(self.raw["terminal"].get("params") or {}))

    def ensemble(self):
        e = self.raw["ensemble"]
        return sample_brownian(make_grid(int(e["steps"])), int(e["m"]), int(e["paths"]), int(e["seed"]))

    def regression(self) -> RegressionConfig:
        r = self.raw["regression"]
        return RegressionConfig(int(r["degree"]), float(r["ridge"]))

    @property
    def picard(self):
        return int(self.raw["regression"]["picard_iters"])

    def kernel(self) -> MollifierKernel:
        k = self.raw["kernel"]
        return MollifierKernel(float(k["support_radius"]), int(k["quadrature_nodes"]))

    def to_dict(self):
        return copy.deepcopy(self.raw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping")
    return ExperimentConfig(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)


@dataclass
class ConvergenceReport:
    config: dict
    seed: int
    ladder: list
    distances: list
    closeness: list
    lipschitz: list
    n_eps: dict
    D_y: np.ndarray
    D_y_l1: np.ndarray
    D_z: np.ndarray
    step1: list
    girsanov: dict
    dominators: dict
    global_checks: list
    core_global: dict
    residual: dict
    monotone: dict
    step2_fit: dict
    osgood: dict
    moduli: list
    stages: dict

    @property
    def passed(self):
        return all(self.stages.values())


class _Stage:
    """Context manager that re-raises failures with the stage name attached."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


def pairwise(sols):
    """Sup Euclidean / sup l1 distances of Y and mean sum ||dZ||^2 h of Z, all pairs."""
    k = len(sols)
    dy, dy1, dz = np.zeros((k, k)), np.zeros((k, k)), np.zeros((k, k))
    step = sols[0].Y.grid.step
    for a in range(k):
        for b in range(a + 1, k):
            diff = sols[a].Y.values - sols[b].Y.values
            dy[a, b] = dy[b, a] = float(np.sqrt(np.max(np.einsum("pjd,pjd->pj", diff, diff))))
            dy1[a, b] = dy1[b, a] = float(np.max(np.abs(diff).sum(axis=2)))
            zd = sols[a].Z.values - sols[b].Z.values
            dz[a, b] = dz[b, a] = float(np.mean(np.einsum("pjdk,pjdk->p", zd, zd) * step))
    return dy, dy1, dz


def longest_increasing(H, flat_tol):
    """Per path, the longest increasing segment of H as (start, end); (N, N) when none."""
    rep = decompose(H, 0, flat_tol)
    count = rep.start.size
    n = rep.steps
    start = np.full(count, n, dtype=np.int64)
    end = np.full(count, n, dtype=np.int64)
    sel = rep.seg_label == INCREASING
    if sel.any():
        path = rep.seg_path[sel]
        length = rep.seg_right[sel] - rep.seg_left[sel]
        order = np.lexsort((-length, path))
        first = order[np.r_[True, path[order][1:] != path[order][:-1]]]
        start[path[first]] = rep.seg_left[sel][first]
        end[path[first]] = rep.seg_right[sel][first]
    return start, end


def girsanov_stage(solA, solB, driver: Driver, eps_pair, ensemble, eps0, slack, flat_tol, sigmas=3.0):
    """Windows, envelope, domination and density for one pair of solutions."""
    d = driver.d
    comb = signed_z_combination(solA, solB)
    start, end = longest_increasing(comb.cumulative, flat_tol)
    window = novikov_window(comb.magnitude, comb.dz_norm, (start, end), eps0)
    X = np.abs(solA.Y.values - solB.Y.values).sum(axis=2)
    problem = BackwardOdeProblem(driver.modulus_y, float(eps_pair), 0.0, 1.0, float(d + 1))
    env = envelope_at(X, window.right, problem, float(X.max()))
    dom = domination_check(solA, solB, env.ode, window, slack)
    psi = driver.modulus_z
    num = psi(comb.dz_norm)
    cap = d * float(psi(np.array([1.0 / eps0]))[0]) / eps0
    eta = drift_eta(num, comb.z, window, float(d), bound=cap)
    dens = density(eta, ensemble, window)
    tol = sigmas * dens.stderr
    dens_ok = bool(abs(dens.mean - 1.0) <= tol) if dens.stderr > 0 else dens.mean == 1.0
    summary = {
        "eps0": eps0,
        "eps_pair": float(eps_pair),
        "nondegenerate_fraction": window.nondegenerate_fraction,
        "gamma0": env.gamma0,
        "domination_worst": dom.worst_exceedance,
        "domination_points": dom.checked_points,
        "domination_passed": dom.passed,
        "eta_max": float(np.max(np.abs(eta))) if eta.size else 0.0,
        "density_mean": dens.mean,
        "density_stderr": dens.stderr,
        "density_passed": dens_ok,
    }
    return summary, window, env, dens


def run_convergence(config: ExperimentConfig) -> ConvergenceReport:
    raw = config.raw
    slack = raw["slack"]
    probes = raw["probes"]
    flat_tol = float(raw["decomposition"]["flat_tol"])
    stages = {}

    with _Stage("setup"):
        base = config.driver()
        xi = config.terminal()
        ens = config.ensemble()
        kernel = config.kernel()
        reg = config.regression()
        ladder = config.ladder
        d = base.d

    with _Stage("mollify"):
        rungs = [mollify(base, kernel, n) for n in ladder]
        distances = [probe_distance(f, base, int(probes["distance"]), int(probes["seed"])) for f in rungs]
        n_eps = {}
        for eps in raw["epsilon_ladder"]:
            hit = [n for n, dist in zip(ladder, distances) if dist <= eps]
            n_eps[float(eps)] = hit[0] if hit else None
        stages["closeness_bound"] = all(dist <= f.closeness_bound + 1e-12 for dist, f in zip(distances, rungs))

    with _Stage("verify_moduli"):
        moduli = [verify_moduli(f, int(probes["moduli"]), int(probes["seed"])) for f in [base] + rungs]
        stages["verify_moduli"] = all(m.passed for m in moduli)
        if not moduli[0].passed:
            raise StageError("verify_moduli", f"driver {base.name} violates its declared moduli")

    with _Stage("solve"):
        sols = [solve_bsde(f, xi, ens, reg, config.picard) for f in rungs]
        stages["terminal_pin"] = all(np.array_equal(s.Y.values[:, -1], xi(ens)) for s in sols)

    with _Stage("pairwise"):
        D_y, D_y_l1, D_z = pairwise(sols)

    with _Stage("step1"):
        K = max(base.modulus_y.growth_K, base.modulus_z.growth_K)
        step1 = []
        for a in range(len(ladder)):
            for b in range(a + 1, len(ladder)):
                r = step1_uniform_bound(sols[a], sols[b], distances[a] + distances[b], K)
                step1.append({"n_a": ladder[a], "n_b": ladder[b], "sup_y_sq": r.sup_y_sq, "z_energy": r.z_energy,
                              "bound": r.bound, "slack_y": r.slack_y, "slack_z": r.slack_z, "passed": r.passed})
        stages["step1_bound"] = all(r["passed"] for r in step1)

    with _Stage("girsanov"):
        if len(ladder) > 1:
            a, b = np.unravel_index(int(np.argmax(D_y)), D_y.shape)
            a, b = int(min(a, b)), int(max(a, b))
            if a == b:
                a, b = 0, len(ladder) - 1
            g, _, _, _ = girsanov_stage(sols[a], sols[b], base, distances[a] + distances[b], ens,
                                        float(raw["eps0"]), float(slack["domination"]), flat_tol,
                                        float(slack["density_sigmas"]))
            g.update({"n_a": ladder[a], "n_b": ladder[b]})
            stages["domination"] = g["domination_passed"]
            stages["density_mean"] = g["density_passed"]
        else:
            g = {}

    with _Stage("global_dominator"):
        dominators = {}
        for eps in raw["epsilon_ladder"]:
            dominators[float(eps)] = global_dominator(base.modulus_y, float(eps), d, ens.grid.steps).initial()
        checks = []
        for eps, n0 in n_eps.items():
            if n0 is None:
                continue
            for a in range(len(ladder)):
                for b in range(a + 1, len(ladder)):
                    if ladder[a] >= n0:
                        ok = D_y_l1[a, b] <= dominators[eps] + slack["global"]
                        checks.append({"eps": eps, "n_a": ladder[a], "n_b": ladder[b], "D_y_l1": D_y_l1[a, b],
                                       "V0": dominators[eps], "passed": bool(ok)})
        core = {}
        if len(ladder) > 1:
            eps_core = distances[-2]
            v_core = global_dominator(base.modulus_y, eps_core, d, ens.grid.steps).initial()
            core = {"n_a": ladder[-2], "n_b": ladder[-1], "eps": eps_core, "D_y": D_y[-2, -1],
                    "D_y_l1": D_y_l1[-2, -1], "V0": v_core,
                    "passed": bool(D_y_l1[-2, -1] <= v_core + slack["global"])}
            stages["core_global_bound"] = core["passed"]
        stages["global_bound"] = all(c["passed"] for c in checks)

    with _Stage("limit_residual"):
        own = residual_check(sols[-1], rungs[-1], xi, ens).rms
        lim = residual_check(sols[-1], base, xi, ens).rms
        factor = float(slack["residual_factor"])
        residual = {"own": own, "original": lim, "factor": factor, "passed": bool(lim <= factor * own)}
        stages["limit_residual"] = residual["passed"]

    with _Stage("monotone"):
        seq = [float(D_y[i, -1]) for i in range(len(ladder) - 1)]
        inversions = [ladder[i + 1] for i in range(len(seq) - 1) if seq[i + 1] > seq[i]]
        monotone = {"D_y_to_last": seq, "inversions": inversions, "passed": len(inversions) <= 1}
        stages["monotone"] = monotone["passed"]

    with _Stage("step2_fit"):
        iu = np.triu_indices(len(ladder), 1)
        x, y = np.sqrt(D_y[iu]), D_z[iu]
        if x.size >= 2 and np.ptp(x) > 0:
            c1, c2 = np.polyfit(x, y, 1)
            c2 = float(c2 + max(0.0, float(np.max(y - (c1 * x + c2)))))
        else:
            c1, c2 = 0.0, float(y.max()) if y.size else 0.0
        step2 = {"c1": float(c1), "c2": c2}

    with _Stage("osgood"):
        verdict = osgood_check(base.modulus_y) if base.modulus_y.growth_K > 0 else None
        eps_list = sorted(dominators)
        osg = {
            "declared": base.modulus_y.osgood_declared,
            "heuristic": None if verdict is None else verdict.verdict,
            "dominator_collapse_ratio": (dominators[eps_list[0]] / dominators[eps_list[-1]]) if eps_list else None,
        }

    return ConvergenceReport(config.to_dict(), config.seed, ladder, distances,
                             [f.closeness_bound for f in rungs], [f.lipschitz_constant for f in rungs], n_eps,
                             D_y, D_y_l1, D_z, step1, g, dominators, checks, core, residual, monotone, step2,
                             osg, [m.__dict__ for m in moduli], stages)


@dataclass
class UniquenessReport:
    scale: float
    ridge: tuple
    picard: tuple
    y0_gap: float
    D_y: float
    budget: float
    passed: bool


def run_uniqueness_probe(config: ExperimentConfig, perturbation_scale: float) -> UniquenessReport:
    """Solve the largest-n problem twice with ridge * 10^scale and more Picard sweeps.

    A numerical stability proxy for uniqueness, not a proof of it.
    """
    if perturbation_scale < 0:
        raise ValueError("perturbation_scale must be non-negative")
    base = config.driver()
    f = mollify(base, config.kernel(), config.ladder[-1]) if base.lipschitz_constant is None else base
    xi, ens, reg = config.terminal(), config.ensemble(), config.regression()
    reg2 = RegressionConfig(reg.degree, reg.ridge * 10.0 ** perturbation_scale)
    picard2 = config.picard + int(round(config.picard * perturbation_scale))
    s1 = solve_bsde(f, xi, ens, reg, config.picard)
    s2 = solve_bsde(f, xi, ens, reg2, picard2)
    diff = s1.Y.values - s2.Y.values
    dy = float(np.sqrt(np.max(np.einsum("pjd,pjd->pj", diff, diff))))
    gap = float(np.max(np.abs(s1.meta["y0"] - s2.meta["y0"])))
    budget = float(config.raw["slack"]["uniqueness"])
    return UniquenessReport(float(perturbation_scale), (reg.ridge, reg2.ridge), (config.picard, picard2), gap, dy,
                            budget, bool(dy <= budget))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def jsonable(x):
    """Plain-Python copy with non-finite floats spelled as strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _table(path, ladder, mat):
    write_csv(path, ["n"] + [str(n) for n in ladder], [[n] + list(row) for n, row in zip(ladder, mat)])


def export(report: ConvergenceReport, out_dir, fmt: str = "both"):
    """Write the report; returns the list of files written (sorted)."""
    if fmt not in ("csv", "json", "both"):
        raise ValueError("fmt must be csv, json or both")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")
    files = []

    def p(name):
        files.append(os.path.join(out_dir, name))
        return files[-1]

    if fmt in ("csv", "both"):
        _table(p("d_y.csv"), report.ladder, report.D_y)
        _table(p("d_y_l1.csv"), report.ladder, report.D_y_l1)
        _table(p("d_z.csv"), report.ladder, report.D_z)
        write_csv(p("mollification.csv"), ["n", "probe_distance", "closeness_bound", "lipschitz_estimate"],
                  zip(report.ladder, report.distances, report.closeness, report.lipschitz))
        write_csv(p("step1.csv"), ["n_a", "n_b", "sup_y_sq", "z_energy", "bound", "slack_y", "slack_z", "passed"],
                  [[r[k] for k in ("n_a", "n_b", "sup_y_sq", "z_energy", "bound", "slack_y", "slack_z", "passed")]
                   for r in report.step1])
        write_csv(p("dominators.csv"), ["eps", "n_eps", "V0"],
                  [[e, report.n_eps.get(e), v] for e, v in report.dominators.items()])
        write_csv(p("stages.csv"), ["stage", "passed"], report.stages.items())
    if fmt in ("json", "both"):
        write_json(p("summary.json"), summary_payload(report))
    return sorted(files)


def summary_payload(report: ConvergenceReport):
    return {
        "note": "bounds compare Monte Carlo approximations on a finite grid; every inequality carries the "
                "slack declared in config.slack",
        "config": report.config,
        "seed": report.seed,
        "ladder": report.ladder,
        "probe_distance": report.distances,
        "closeness_bound": report.closeness,
        "n_eps": {repr(k): v for k, v in report.n_eps.items()},
        "D_y": report.D_y,
        "D_y_l1": report.D_y_l1,
        "D_z": report.D_z,
        "step1": report.step1,
        "girsanov": report.girsanov,
        "dominators": {repr(k): v for k, v in report.dominators.items()},
        "global_checks": report.global_checks,
        "core_global": report.core_global,
        "residual": report.residual,
        "monotone": report.monotone,
        "step2_fit": report.step2_fit,
        "osgood": report.osgood,
        "moduli": report.moduli,
        "stages": report.stages,
        "passed": report.passed,
    }
