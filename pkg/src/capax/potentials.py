"""Riesz and Bessel convolutions, nonlinear potentials and Wolff potentials.

Measures are point masses at cell centers (:class:`~capax.grid.DiscreteMeasure`);
densities are converted with ``m = f h^n``.  The convolution

    (I * mu)(x_i) = sum_j K(x_i - x_j) m_j

uses the exact cell average of the kernel singularity at lag zero.  Scale
integrals ``int_0^rho (...) dt/t`` use a :class:`~capax.grid.LogTimeGrid`
starting at ``h/2``, the scale of a single cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from .grid import (DiscreteMeasure, Field, Grid, LogTimeGrid, cube_integrals,
                   strict_window, window_sum, _cumulative)
from .weights import WeightField, dual_exponent

__all__ = [
    "LocalRieszKernel",
    "BesselKernelApprox",
    "SpaceTimeKernel",
    "as_measure",
    "riesz_convolve",
    "nonlinear_potential_V",
    "wolff_cal",
    "wolff_variant",
    "nonlinear_V_cal",
    "bessel_convolve",
    "riesz_direct",
    "riesz_scale_form",
    "energy",
]


def _self_average_sup(dim: int, h: float, alpha: float) -> float:
    """Average of ``|y|_inf^{alpha-n}`` over the cell ``|y|_inf < h/2``."""
    return dim * (h / 2) ** (alpha - dim) / alpha


def _self_average_euclid(dim: int, h: float, alpha: float) -> float:
    """Average of ``|y|_2^{alpha-n}`` over the cell ``|y|_inf < h/2``."""
    if dim == 1:
        return (h / 2) ** (alpha - 1) / alpha
    ang, _ = integrate.quad(lambda th: math.cos(th) ** (-alpha), 0.0, math.pi / 4)
    return 8.0 / alpha * (h / 2) ** alpha * ang / h**2


def _lag_grid(grid: Grid, reach: int):
    """Integer lags ``-reach..reach`` per axis (truncated to the grid span)."""
    lags = []
    for a in range(grid.dim):
        m = min(reach, grid.shape[a] - 1)
        lags.append(np.arange(-m, m + 1))
    return np.meshgrid(*lags, indexing="ij")


@dataclass(frozen=True)
class LocalRieszKernel:
    """``|x|_inf^{alpha-n}`` restricted to ``|x|_inf < rho``."""

    alpha: float
    rho: float

    def check(self, grid: Grid):
        if not 0 < self.alpha < grid.dim:
            raise ValueError(f"alpha must lie in (0, {grid.dim})")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    def profile(self, grid: Grid, lag_vectors: np.ndarray) -> np.ndarray:
        """Kernel values at integer lag vectors (last axis = dimension)."""
        lag = np.max(np.abs(lag_vectors), axis=-1)
        out = np.zeros(lag.shape)
        # integer comparison keeps the cutoff exact when rho/h is an integer
        inside = (lag > 0) & (lag <= self.reach(grid))
        out[inside] = (lag[inside] * grid.h) ** (self.alpha - grid.dim)
        out[lag == 0] = _self_average_sup(grid.dim, grid.h, self.alpha)
        return out

    def reach(self, grid: Grid) -> int:
        return int(strict_window(self.rho, grid.h))

    def stencil(self, grid: Grid) -> np.ndarray:
        self.check(grid)
        mesh = _lag_grid(grid, self.reach(grid))
        return self.profile(grid, np.stack(mesh, axis=-1))

    def apply(self, grid: Grid, masses: np.ndarray) -> np.ndarray:
        """Convolution of cell masses with the kernel, evaluated at cell centers."""
        return signal.convolve(np.asarray(masses, float), self.stencil(grid), mode="same")

    def rows(self, grid: Grid, row_idx: np.ndarray) -> np.ndarray:
        """Dense kernel rows ``K(x_i - x_j)`` for flat row indices ``i`` and all ``j``."""
        self.check(grid)
        ij = np.stack(np.unravel_index(np.arange(grid.size), grid.shape), axis=1)
        lag = ij[np.asarray(row_idx)][:, None, :] - ij[None, :, :]
        return self.profile(grid, lag)


@dataclass(frozen=True)
class BesselKernelApprox:
    """Positive kernel with both Bessel asymptotes, matched at ``c_match``.

    ``G(r) = r^{alpha-n}`` for ``r <= c`` and
    ``G(r) = c^{alpha-n} (r/c)^{-(n+1-alpha)/2} exp(-(r - c))`` beyond, with
    ``r`` the Euclidean norm.  The profile is continuous at ``c``.
    """

    alpha: float
    c_match: float = 1.0

    def check(self, grid: Grid):
        if not 0 < self.alpha < grid.dim:
            raise ValueError(f"alpha must lie in (0, {grid.dim})")

    def radial(self, r, dim: int) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        c = self.c_match
        rs = np.where(r > 0, r, 1.0)
        near = rs ** (self.alpha - dim)
        far = c ** (self.alpha - dim) * (rs / c) ** (-(dim + 1 - self.alpha) / 2) * np.exp(-(rs - c))
        return np.where(r <= c, near, far)

    def profile(self, grid: Grid, lag_vectors: np.ndarray) -> np.ndarray:
        d = np.sqrt(np.sum(np.asarray(lag_vectors, float) ** 2, axis=-1)) * grid.h
        out = self.radial(d, grid.dim)
        out[d == 0] = _self_average_euclid(grid.dim, grid.h, self.alpha)
        return out

    def reach(self, grid: Grid) -> int:
        return max(grid.shape)

    def stencil(self, grid: Grid) -> np.ndarray:
        self.check(grid)
        mesh = _lag_grid(grid, self.reach(grid))
        return self.profile(grid, np.stack(mesh, axis=-1))

    def apply(self, grid: Grid, masses: np.ndarray) -> np.ndarray:
        return signal.convolve(np.asarray(masses, float), self.stencil(grid), mode="same")

    def rows(self, grid: Grid, row_idx: np.ndarray) -> np.ndarray:
        self.check(grid)
        ij = np.stack(np.unravel_index(np.arange(grid.size), grid.shape), axis=1)
        lag = ij[np.asarray(row_idx)][:, None, :] - ij[None, :, :]
        return self.profile(grid, lag)


@dataclass(frozen=True)
class SpaceTimeKernel:
    """``k(x, (y, t)) = t^{-(n-alpha)} chi(|x - y|_inf < t)`` for ``0 < t < rho``.

    The scale variable is sampled on ``LogTimeGrid(h/2, rho)``.
    """

    alpha: float
    rho: float
    nodes_per_octave: int = 8

    def tgrid(self, grid: Grid) -> LogTimeGrid:
        return LogTimeGrid(grid.h / 2, self.rho, self.nodes_per_octave)

    def check(self, grid: Grid):
        if not 0 < self.alpha < grid.dim:
            raise ValueError(f"alpha must lie in (0, {grid.dim})")
        if not self.rho > grid.h / 2:
            raise ValueError("rho must exceed h/2")

    def layers(self, grid: Grid):
        """Nodes ``t_k``, ``dt/t`` weights and strict index windows."""
        tg = self.tgrid(grid)
        t = tg.nodes()
        return t, tg.weights(), strict_window(t, grid.h)

    def k_of_mu(self, grid: Grid, masses: np.ndarray) -> np.ndarray:
        """``t^{-(n-alpha)} mu(Q_t(y))`` on the (scale, cell) product grid."""
        t, _, win = self.layers(grid)
        s = grid.dim - self.alpha
        return np.stack([window_sum(masses, int(m)) / tk**s for tk, m in zip(t, win)])


def as_measure(mu_or_f) -> DiscreteMeasure:
    """Masses of a measure, or ``|f| h^n`` for a density field."""
    if isinstance(mu_or_f, DiscreteMeasure):
        return mu_or_f
    if isinstance(mu_or_f, Field):
        return DiscreteMeasure.from_density(mu_or_f)
    raise TypeError("expected a DiscreteMeasure or a Field")


def riesz_convolve(mu_or_f, alpha: float, rho: float) -> Field:
    """``I_{alpha,rho} * mu`` at cell centers.

    Examples
    --------
    >>> from capax.grid import make_grid, DiscreteMeasure
    >>> g = make_grid(1, 0.5, (-1.25, 1.25))
    >>> mu = DiscreteMeasure.dirac(g, [0.0])
    >>> round(float(riesz_convolve(mu, 0.5, 1.0).values[3]), 12)
    1.414213562373
    """
    mu = as_measure(mu_or_f)
    k = LocalRieszKernel(alpha, rho)
    k.check(mu.grid)
    return Field(mu.grid, k.apply(mu.grid, mu.mass))


def _check_p(p: float):
    if not p > 1:
        raise ValueError("p must exceed 1")


def nonlinear_potential_V(mu: DiscreteMeasure, omega: WeightField, alpha: float,
                          p: float, rho: float) -> Field:
    """``I * ((I * mu)^{p'-1} w')`` with ``w' = w^{-1/(p-1)}``."""
    _check_p(p)
    mu = as_measure(mu)
    g = mu.grid
    q = dual_exponent(p)
    k = LocalRieszKernel(alpha, rho)
    inner = np.maximum(k.apply(g, mu.mass), 0.0) ** (q - 1) * omega.values ** (-1.0 / (p - 1))
    return Field(g, k.apply(g, inner * g.cell_volume))


def _default_tgrid(grid: Grid, rho: float, tgrid: LogTimeGrid | None) -> LogTimeGrid:
    if tgrid is None:
        return LogTimeGrid(grid.h / 2, rho)
    if tgrid.t_max > rho * (1 + 1e-12):
        raise ValueError("tgrid.t_max exceeds rho")
    return tgrid


def wolff_cal(mu: DiscreteMeasure, omega: WeightField, alpha: float, p: float,
              rho: float, tgrid: LogTimeGrid | None = None) -> Field:
    """Wolff potential ``int_0^rho (t^{alpha p} mu(Q_t) / w(Q_t))^{1/(p-1)} dt/t``.

    Below ``t0 = tgrid.t_min`` the cell's own mass is taken as spread
    uniformly, which gives the closed form
    ``(m_i / (h^n w_i))^{1/(p-1)} t0^{alpha p/(p-1)} (p-1)/(alpha p)``.
    """
    _check_p(p)
    mu = as_measure(mu)
    g = mu.grid
    tg = _default_tgrid(g, rho, tgrid)
    e = 1.0 / (p - 1)
    centers = g.centers()
    table = _cumulative(g, omega.values)
    out = np.zeros(g.shape)
    for t, wt, m in zip(tg.nodes(), tg.weights(), strict_window(tg.nodes(), g.h)):
        mass = window_sum(mu.mass, int(m))
        wq, _ = cube_integrals(g, None, centers, np.full(g.size, t), table)
        out += (t ** (alpha * p) * mass / wq.reshape(g.shape)) ** e * wt
    c = mu.mass / (g.cell_volume * omega.values)
    out += c**e * tg.t_min ** (alpha * p * e) / (alpha * p * e)
    return Field(g, out)


def wolff_variant(mu: DiscreteMeasure, omega: WeightField, alpha: float, p: float,
                  rho: float, tgrid: LogTimeGrid | None = None) -> Field:
    """Variant Wolff potential
    ``int_0^rho (mu(Q_t)/t^{n - alpha p})^{1/(p-1)} Avg_{Q_t} w' dt/t``."""
    _check_p(p)
    mu = as_measure(mu)
    g = mu.grid
    n = g.dim
    tg = _default_tgrid(g, rho, tgrid)
    e = 1.0 / (p - 1)
    wd = omega.values ** (-e)
    centers = g.centers()
    table = _cumulative(g, wd)
    out = np.zeros(g.shape)
    for t, wt, m in zip(tg.nodes(), tg.weights(), strict_window(tg.nodes(), g.h)):
        mass = window_sum(mu.mass, int(m))
        val, vol = cube_integrals(g, None, centers, np.full(g.size, t), table)
        avg = (val / vol).reshape(g.shape)
        out += (mass / t ** (n - alpha * p)) ** e * avg * wt
    c = mu.mass * 2.0**n / g.cell_volume
    out += c**e * wd * tg.t_min ** (alpha * p * e) / (alpha * p * e)
    return Field(g, out)


def nonlinear_V_cal(mu: DiscreteMeasure, omega: WeightField, alpha: float, p: float,
                    rho: float, tgrid: LogTimeGrid | None = None) -> Field:
    """Nonlinear potential of the space-time kernel,
    ``int_0^rho int_{|x-y|<t} (mu(Q_t(y))/t^{n-alpha})^{1/(p-1)} w'(y)
    t^{-(n-alpha)} dy dt/t``.

    Scales below ``h/2`` are dropped: for point masses the integrand is not
    integrable there.
    """
    _check_p(p)
    mu = as_measure(mu)
    g = mu.grid
    s = g.dim - alpha
    tg = _default_tgrid(g, rho, tgrid)
    e = 1.0 / (p - 1)
    wd = omega.values ** (-e)
    out = np.zeros(g.shape)
    for t, wt, m in zip(tg.nodes(), tg.weights(), strict_window(tg.nodes(), g.h)):
        k = window_sum(mu.mass, int(m)) / t**s
        out += window_sum(k**e * wd * g.cell_volume, int(m)) / t**s * wt
    return Field(g, out)


def bessel_convolve(mu_or_f, alpha: float, c_match: float = 1.0) -> Field:
    """Convolution with :class:`BesselKernelApprox` over the whole box."""
    mu = as_measure(mu_or_f)
    k = BesselKernelApprox(alpha, c_match)
    k.check(mu.grid)
    return Field(mu.grid, k.apply(mu.grid, mu.mass))


def energy(mu: DiscreteMeasure, potential: Field) -> float:
    """``int potential dmu``."""
    return float(np.sum(mu.mass * potential.values))


def riesz_direct(mu: DiscreteMeasure, x, alpha: float, upper: float = math.inf,
                 lower: float = 0.0) -> float:
    """``sum m_j |x - y_j|_inf^{alpha-n}`` over atoms with
    ``lower <= |x - y_j|_inf < upper`` (atoms at ``x`` itself are skipped)."""
    g = mu.grid
    d = g.sup_distance(x)
    sel = (d >= lower) & (d < upper) & (d > 0) & (mu.mass > 0)
    return float(np.sum(mu.mass[sel] * d[sel] ** (alpha - g.dim)))


def riesz_scale_form(mu: DiscreteMeasure, x, alpha: float, upper: float = math.inf,
                     lower: float = 0.0, nodes_per_octave: int = 256) -> float:
    """The same annulus sum written through ``r -> mu(Q_r(x))``:

    ``(n-alpha) int_lower^upper mu(Q_r) r^{alpha-n} dr/r
    + mu(Q_upper) upper^{alpha-n} - mu(Q_lower) lower^{alpha-n}``,

    with the ``dr/r`` integral done by log-midpoint quadrature.  Atoms at
    ``x`` are excluded.
    """
    g = mu.grid
    n = g.dim
    s = n - alpha
    d = g.sup_distance(x)
    keep = (d > 0) & (mu.mass > 0)
    dist = d[keep]
    mass = mu.mass[keep]
    if dist.size == 0:
        return 0.0
    order = np.argsort(dist)
    dist, cum = dist[order], np.cumsum(mass[order])

    def m_of(r):
        i = np.searchsorted(dist, r, side="left")
        return np.where(i > 0, cum[np.maximum(i - 1, 0)], 0.0)

    a = lower if lower > 0 else dist[0] * 0.5
    b_fin = upper if math.isfinite(upper) else dist[-1] * 2.0
    tg = LogTimeGrid(a, b_fin, nodes_per_octave)
    t = tg.nodes()
    val = s * float(np.sum(m_of(t) * t ** (-s) * tg.weights()))
    if math.isfinite(upper):
        val += float(m_of(np.array([upper]))[0]) * upper ** (-s)
    else:
        val += cum[-1] * b_fin ** (-s)
    if lower > 0:
        val -= float(m_of(np.array([lower]))[0]) * lower ** (-s)
    return val
