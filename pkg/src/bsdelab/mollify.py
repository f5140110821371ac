"""Mollification of drivers by a compactly supported smooth bump."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate

from .drivers import Driver

_BATCH_ROWS = 1 << 16


def bump(r2):
    """exp(-1 / (1 - |w|^2)) inside the unit ball, 0 outside; takes |w|^2."""
    r2 = np.asarray(r2, dtype=float)
    inside = r2 < 1.0
    safe = np.where(inside, 1.0 - r2, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


_MAX_TENSOR_NODES = 20_000_000


def _axis_codes(nodes):
    """Midpoint centres on [-1, 1] as odd integers k with centre = k / nodes."""
    return 2 * np.arange(nodes) + 1 - nodes


@lru_cache(maxsize=32)
def _tensor_nodes(nodes, dim):
    if nodes ** dim > _MAX_TENSOR_NODES:
        raise ValueError(f"{nodes}^{dim} quadrature nodes is too many; lower quadrature_nodes")
    centres = _axis_codes(nodes) / nodes
    grid = np.stack(np.meshgrid(*([centres] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    raw = bump(np.einsum("ij,ij->i", grid, grid)) * (2.0 / nodes) ** dim
    keep = raw > 0
    return grid[keep], raw[keep], float(raw.sum())


@lru_cache(maxsize=32)
def _marginal_nodes(nodes, dim_y, dim_z):
    """y-marginal of the dim_y + dim_z tensor rule without building the full grid.

    Squared radii on the midpoint grid are integers over nodes^2, so the
    z-axes enter only through the multiset of their integer sums of squares.
    """
    sq = _axis_codes(nodes) ** 2
    counts = {0: 1}
    for _ in range(dim_z):
        nxt = {}
        for s, c in counts.items():
            for v in sq.tolist():
                nxt[s + v] = nxt.get(s + v, 0) + c
        counts = nxt
    zsum = np.array(sorted(counts), dtype=np.int64)
    zcount = np.array([counts[k] for k in zsum], dtype=float)
    if nodes ** dim_y > _MAX_TENSOR_NODES:
        raise ValueError(f"{nodes}^{dim_y} quadrature nodes is too many; lower quadrature_nodes")
    codes = np.stack(np.meshgrid(*([_axis_codes(nodes)] * dim_y), indexing="ij"), axis=-1).reshape(-1, dim_y)
    ysq = np.sum(codes ** 2, axis=1)
    r2 = (ysq[:, None] + zsum[None, :]) / float(nodes * nodes)
    raw = (bump(r2) @ zcount) * (2.0 / nodes) ** (dim_y + dim_z)
    keep = raw > 0
    return codes[keep] / nodes, raw[keep], float(raw.sum())


@lru_cache(maxsize=32)
def _gradient_ratio(dim):
    """int |grad psi| / int psi for the radial bump in ``dim`` dimensions."""
    def dprof(s):
        return abs(-2.0 * s / (1.0 - s * s) ** 2 * np.exp(-1.0 / (1.0 - s * s))) if s < 1 else 0.0

    num = integrate.quad(lambda s: dprof(s) * s ** (dim - 1), 0.0, 1.0, limit=200)[0]
    den = integrate.quad(lambda s: float(bump(s * s)) * s ** (dim - 1), 0.0, 1.0, limit=200)[0]
    return num / den


@dataclass(frozen=True)
class MollifierKernel:
    """Bump profile on the unit ball of (y, z)-space, scaled to ``support_radius``.

    Quadrature is a tensor midpoint rule with ``quadrature_nodes`` cells per
    axis on [-1, 1]^D; nodes outside the ball drop out and the remaining
    weights are divided by their sum (``normalization``), so the discrete
    kernel has unit mass whatever the scaling exponent of psi_n.
    """

    support_radius: float = 1.0
    quadrature_nodes: int = 9

    def __post_init__(self):
        if self.quadrature_nodes < 2:
            raise ValueError("need at least 2 quadrature nodes per axis")
        if self.support_radius <= 0:
            raise ValueError("support_radius must be positive")

    def quadrature(self, dim):
        """(nodes (Q, dim) in the unit ball, weights (Q,) summing to 1, normalization)."""
        pts, raw, norm = _tensor_nodes(int(self.quadrature_nodes), int(dim))
        return pts, raw / norm, norm

    def marginal_quadrature(self, dim_y, dim_z):
        """Quadrature of the first ``dim_y`` axes with the other ``dim_z`` summed out."""
        pts, raw, norm = _marginal_nodes(int(self.quadrature_nodes), int(dim_y), int(dim_z))
        return pts, raw / norm, norm

    def mass(self, dim):
        return float(self.quadrature(dim)[1].sum())

    def gradient_ratio(self, dim):
        return _gradient_ratio(int(dim))


def mollify(driver: Driver, kernel: MollifierKernel, n: int) -> Driver:
    """f_n = f * psi_n evaluated by fixed quadrature over the ball of radius r/n.

    The returned driver records ``closeness_bound = Phi(r/n) + Psi(r/n)``,
    which bounds sup |f_n - f| for the discrete kernel as well. Its
    ``lipschitz_constant`` is the bound (Phi(rho) + Psi(rho)) G / rho with
    rho = r/n and G = int|grad psi| / int psi, capped by the constant of f
    when f is already Lipschitz. The quadrature sum is a finite combination
    of shifted copies of f, so the estimate describes it only at separations
    of at least one node spacing 2 r / (n * quadrature_nodes).
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    d, m = driver.d, driver.m
    dim = d + d * m
    rho = kernel.support_radius / n
    if driver.uses_z:
        pts, w, _ = kernel.quadrature(dim)
        u = rho * pts[:, :d]
        v = rho * pts[:, d:].reshape(-1, d, m)
    else:
        ypts, w, _ = kernel.marginal_quadrature(d, d * m)
        u = rho * ypts
    f = driver.eval
    uses_z = driver.uses_z

    def fn(t, y, z):
        # nodes are evaluated in one stacked batch per chunk of at most _BATCH_ROWS rows
        p = y.shape[0]
        out = np.zeros(y.shape)
        chunk = max(1, _BATCH_ROWS // max(p, 1))
        for lo in range(0, w.size, chunk):
            hi = min(lo + chunk, w.size)
            q = hi - lo
            ys = (y[None, :, :] - u[lo:hi, None, :]).reshape(q * p, d)
            if uses_z:
                zs = (z[None] - v[lo:hi, None]).reshape(q * p, d, m)
            else:
                # z is ignored by the driver; a zero-stride view avoids a copy
                zs = np.broadcast_to(np.zeros((1, d, m)), (q * p, d, m))
            vals = f(t, ys, zs).reshape(q, p, d)
            out += np.tensordot(w[lo:hi], vals, axes=(0, 0))
        return out

    omega = float(driver.modulus_y(np.array([rho]))[0] + driver.modulus_z(np.array([rho]))[0])
    lip = omega * kernel.gradient_ratio(dim) / rho
    if driver.lipschitz_constant is not None:
        lip = min(lip, driver.lipschitz_constant)
    return replace(driver, eval=fn, lipschitz_constant=float(lip), name=f"{driver.name}*psi_{n}",
                   closeness_bound=omega)


def probe_points(driver: Driver, count: int = 2000, seed: int = 0, radius: float = 3.0):
    """Seeded probe set: uniform box samples plus a fine line through the origin."""
    rng = np.random.default_rng(seed)
    d, m = driver.d, driver.m
    line = np.linspace(-radius, radius, 1201)[:, None] * np.full(d, 1.0 / np.sqrt(d))[None, :]
    y = np.concatenate((rng.uniform(-radius, radius, size=(count, d)), line))
    if driver.uses_z:
        z = rng.uniform(-radius, radius, size=(y.shape[0], d, m))
    else:
        z = np.zeros((y.shape[0], d, m))
    return float(rng.uniform()), y, z


def probe_distance(fa: Driver, fb: Driver, count: int = 2000, seed: int = 0) -> float:
    """sup |fa - fb| over :func:`probe_points`."""
    t, y, z = probe_points(fb, count, seed)
    return float(np.max(np.linalg.norm(fa(t, y, z) - fb(t, y, z), axis=1)))
