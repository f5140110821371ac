"""Drivers f(t, y, z), terminal conditions and the built-in catalog.

A driver is evaluated on batches: ``t`` is a float, ``y`` has shape (P, d)
and ``z`` has shape (P, d, m); the result has shape (P, d). Lipschitz
constants follow the convention

    |f(t, y1, z1) - f(t, y2, z2)| <= L (|y1 - y2| + ||z1 - z2||)

with ``||.||`` the Frobenius norm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .moduli import Modulus, linear_modulus, osgood_modulus, sqrt_modulus, zero_modulus


@dataclass(frozen=True, eq=False)
class Driver:
    d: int
    m: int
    eval: Callable
    modulus_y: Modulus
    modulus_z: Modulus
    lipschitz_constant: Optional[float] = None
    uses_z: bool = True
    name: str = "custom"
    closeness_bound: Optional[float] = None

    @property
    def dims(self):
        return (self.d, self.m)

    def __call__(self, t, y, z):
        return self.eval(t, y, z)

    def with_lipschitz(self, constant):
        return replace(self, lipschitz_constant=constant)


@dataclass(frozen=True, eq=False)
class TerminalCondition:
    """xi as a function of the path array (M, N+1, m) -> (M, d)."""

    d: int
    eval: Callable[[np.ndarray], np.ndarray]
    markovian: bool
    name: str = "custom"

    def __call__(self, ensemble):
        values = getattr(ensemble, "values", ensemble)
        return np.asarray(self.eval(values), dtype=float)


def _unit(d):
    return np.full(d, 1.0 / np.sqrt(d))


def _norm_driver(d, m, phi, name):
    """f(y) = phi(|y|) * e with e = (1, ..., 1)/sqrt(d); modulus phi in y when phi is concave."""
    e = _unit(d)
    ones = np.ones(d)

    def f(t, y, z):
        r = np.abs(y[:, 0]) if d == 1 else np.sqrt(np.square(y) @ ones)
        return phi(r)[:, None] @ e[None, :]

    return Driver(d, m, f, phi, zero_modulus(), None, False, name)


def zero_driver(d=1, m=1):
    return Driver(d, m, lambda t, y, z: np.zeros_like(y), zero_modulus(), zero_modulus(), 0.0, False, "zero")


def linear_driver(d=1, m=1, a=0.5, b=0.3):
    """f_i = a y_i + b sum_k z_ik."""
    a, b = float(a), float(b)

    def f(t, y, z):
        return a * y + b * z.sum(axis=2)

    lip = max(abs(a), abs(b) * np.sqrt(m))
    return Driver(d, m, f, linear_modulus(a), linear_modulus(abs(b) * np.sqrt(m)), lip, b != 0.0,
                  f"linear(a={a:g},b={b:g})")


def sine_driver(d=1, m=1, amplitude=1.0):
    c = float(amplitude)
    return Driver(d, m, lambda t, y, z: c * np.sin(y), linear_modulus(c), zero_modulus(), abs(c), False,
                  f"sine({c:g})")


def abs_driver(d=1, m=1):
    return Driver(d, m, lambda t, y, z: np.abs(y), linear_modulus(1.0), zero_modulus(), 1.0, False, "abs")


def osgood_driver(d=1, m=1):
    return _norm_driver(d, m, osgood_modulus(), "osgood")


def sqrt_driver(d=1, m=1):
    return _norm_driver(d, m, sqrt_modulus(1.0), "sqrt")


def deterministic_driver(phi: Modulus, epsilon: float, d=1, m=1):
    """f_i(y) = phi(max(y_i, 0)) + epsilon, the driver of the deterministic BSDE."""
    eps = float(epsilon)
    lip = 1.0 if phi.name.startswith("linear") else None
    return Driver(d, m, lambda t, y, z: phi(np.maximum(y, 0.0)) + eps, phi, zero_modulus(), lip, False,
                  f"ode({phi.name},{eps:g})")


CATALOG = {
    "zero": zero_driver,
    "linear": linear_driver,
    "sine": sine_driver,
    "abs": abs_driver,
    "osgood": osgood_driver,
    "sqrt": sqrt_driver,
}


def builtin_catalog(name: str, d: int = 1, m: int = 1, **params) -> Driver:
    """Catalog driver by name: zero, linear(a, b), sine(amplitude), abs, osgood, sqrt."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown driver {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(d=d, m=m, **params)


def terminal_condition(name: str, d: int = 1, m: int = 1, **params) -> TerminalCondition:
    """Catalog terminal conditions.

    brownian: xi_i = scale * B^{i mod m}(1) + shift
    constant: xi_i = value
    abs: xi_i = |B^{i mod m}(1)|
    running_mean: xi_i = mean over the grid of B^{i mod m} (not Markovian)
    """
    cols = np.arange(d) % m
    if name == "brownian":
        scale, shift = float(params.get("scale", 1.0)), float(params.get("shift", 0.0))
        if scale == 1.0 and shift == 0.0:
            return TerminalCondition(d, lambda v: np.array(v[:, -1, cols]), True, name)
        return TerminalCondition(d, lambda v: scale * v[:, -1, cols] + shift, True, name)
    if name == "constant":
        value = float(params.get("value", 1.0))
        return TerminalCondition(d, lambda v: np.full((v.shape[0], d), value), True, name)
    if name == "abs":
        return TerminalCondition(d, lambda v: np.abs(v[:, -1, cols]), True, name)
    if name == "running_mean":
        return TerminalCondition(d, lambda v: v[:, :, cols].mean(axis=1), False, name)
    raise ValueError(f"unknown terminal condition {name!r}")


@dataclass(frozen=True)
class ModulusReport:
    probes: int
    violations_y: int
    violations_z: int
    worst_ratio_y: float
    worst_ratio_z: float

    @property
    def passed(self):
        return self.violations_y == 0 and self.violations_z == 0


def _perturb(rng, base, probes):
    """Second point at a log-uniform distance in a random direction."""
    flat = base.reshape(probes, -1)
    direction = rng.standard_normal(flat.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    dist = 10.0 ** rng.uniform(-8, 1, size=(probes, 1))
    return (flat + dist * direction).reshape(base.shape)


def _ratios(df, bound, tol):
    viol = df > bound * (1 + 1e-9) + tol
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, df / bound, np.where(df > tol, np.inf, 0.0))
    return int(viol.sum()), float(ratio.max(initial=0.0))


def verify_moduli(driver: Driver, probes: int = 10_000, seed: int = 0) -> ModulusReport:
    """Sample (t, y1, y2, z) and (t, y, z1, z2) tuples and test both modulus inequalities.

    Base points mix scales from 1e-3 to 10, so kinks near the origin are
    probed as well as the far field.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    d, m = driver.d, driver.m
    t = float(rng.uniform())
    scale_y = 10.0 ** rng.uniform(-3, 1, size=(probes, 1))
    scale_z = 10.0 ** rng.uniform(-3, 1, size=(probes, 1, 1))
    y1 = rng.standard_normal((probes, d)) * scale_y
    z = rng.standard_normal((probes, d, m)) * scale_z
    y2 = _perturb(rng, y1, probes)
    f1 = driver(t, y1, z)
    df = np.linalg.norm(f1 - driver(t, y2, z), axis=1)
    tol = 1e-12 * (1.0 + np.linalg.norm(f1, axis=1))
    vy, wy = _ratios(df, driver.modulus_y(np.linalg.norm(y1 - y2, axis=1)), tol)

    y = rng.standard_normal((probes, d)) * scale_y
    z1 = rng.standard_normal((probes, d, m)) * scale_z
    z2 = _perturb(rng, z1, probes)
    g1 = driver(t, y, z1)
    dg = np.linalg.norm(g1 - driver(t, y, z2), axis=1)
    tol = 1e-12 * (1.0 + np.linalg.norm(g1, axis=1))
    vz, wz = _ratios(dg, driver.modulus_z(np.linalg.norm((z1 - z2).reshape(probes, -1), axis=1)), tol)
    return ModulusReport(probes, vy, vz, wy, wz)


def lipschitz_probe(driver: Driver, probes: int = 10_000, seed: int = 0, min_sep: float = 1e-3,
                    max_sep: float = 1.0) -> float:
    """Largest sampled quotient |f(p1) - f(p2)| / (|dy| + ||dz||)."""
    rng = np.random.default_rng(seed)
    d, m = driver.d, driver.m
    y1 = rng.uniform(-3, 3, size=(probes, d))
    z1 = rng.uniform(-3, 3, size=(probes, d, m)) if driver.uses_z else np.zeros((probes, d, m))
    sep = 10.0 ** rng.uniform(np.log10(min_sep), np.log10(max_sep), size=probes)
    dy = rng.standard_normal((probes, d))
    dz = rng.standard_normal((probes, d, m)) if driver.uses_z else np.zeros((probes, d, m))
    norm = np.linalg.norm(dy, axis=1) + np.linalg.norm(dz.reshape(probes, -1), axis=1)
    dy *= (sep / norm)[:, None]
    dz *= (sep / norm)[:, None, None]
    t = float(rng.uniform())
    df = np.linalg.norm(driver(t, y1, z1) - driver(t, y1 + dy, z1 + dz), axis=1)
    return float(np.max(df / sep))
