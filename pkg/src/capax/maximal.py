"""Local maximal operators on a grid.

Four operators are provided:

* the uncentered local maximal function, a maximum over lattice cubes that
  contain the evaluation point;
* the centered version over dyadic radii ``h, 2h, ..., rho/2``;
* the fractional maximal function ``max_r mu(Q_r(x)) / r^{n - alpha}``;
* the uncentered maximal function relative to a measure ``mu``.

Cubes leaving the box are clipped and averages use the clipped volume.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from .grid import (CubeLattice, DiscreteMeasure, Field, Grid, cube_integrals,
                   enumerate_cubes, strict_window, window_sum)

logger = logging.getLogger(__name__)

__all__ = [
    "dyadic_radii",
    "uncentered_local_maximal",
    "centered_local_maximal",
    "fractional_local_maximal",
    "measure_weighted_maximal",
]


def dyadic_radii(h: float, r_max: float) -> np.ndarray:
    """``{h, 2h, 4h, ...}`` up to ``r_max`` inclusive."""
    radii = []
    r = h
    while r <= r_max * (1 + 1e-12):
        radii.append(r)
        r *= 2
    return np.asarray(radii)


def _as_field(f) -> Field:
    if isinstance(f, Field):
        return f
    raise TypeError("expected a Field")


def _scatter_max(grid: Grid, lattice: CubeLattice, cube_values: np.ndarray) -> np.ndarray:
    """Pointwise max over the lattice cubes whose interior contains each cell center."""
    out = np.zeros(grid.shape)
    if lattice.policy == "centered":
        # centered cubes of one radius form a grid-shaped array; the cube at
        # c contains x iff x lies in the strict window around c
        n = grid.size
        for start in range(0, len(lattice), n):
            r = lattice.radii[start]
            vals = cube_values[start:start + n].reshape(grid.shape)
            m = int(strict_window(r, grid.h))
            filt = ndimage.maximum_filter(vals, size=2 * m + 1, mode="constant", cval=0.0)
            np.maximum(out, filt, out=out)
        return out
    centers = grid.centers()
    for k in range(len(lattice)):
        inside = np.max(np.abs(centers - lattice.centers[k]), axis=1) < lattice.radii[k]
        if np.any(inside):
            flat = out.reshape(-1)
            flat[inside] = np.maximum(flat[inside], cube_values[k])
    return out


def uncentered_local_maximal(f: Field, rho: float, lattice: CubeLattice | None = None) -> Field:
    """Uncentered local maximal function of ``|f|``.

    At each cell center ``x`` the output is the largest average of ``|f|``
    over lattice cubes of side at most ``rho`` containing ``x``.  The single
    cell around ``x`` is always a candidate, so the output dominates ``|f|``.

    Parameters
    ----------
    f : Field
    rho : float
        Largest admissible side length.
    lattice : CubeLattice, optional
        Candidate cubes; the centered dyadic lattice at scale ``rho`` is used
        when omitted.
    """
    f = _as_field(f)
    g = f.grid
    vals = np.abs(f.values)
    if lattice is None:
        lattice = enumerate_cubes(g, rho)
    lattice = lattice.restrict(rho)
    if lattice.policy == "centered" and len(lattice) % g.size != 0:
        lattice = CubeLattice(g, lattice.centers, lattice.radii, lattice.rho, "custom")
    ints, vol = cube_integrals(g, vals, lattice.centers, lattice.radii)
    avg = np.where(vol > 0, ints / np.where(vol > 0, vol, 1.0), 0.0)
    out = _scatter_max(g, lattice, avg)
    return Field(g, np.maximum(out, vals))


def centered_local_maximal(f: Field, rho: float) -> Field:
    """Centered local maximal function over radii ``h, 2h, ..., rho/2``."""
    f = _as_field(f)
    g = f.grid
    radii = dyadic_radii(g.h, rho / 2)
    if len(radii) == 0:
        raise ValueError("rho must be at least 2h")
    vals = np.abs(f.values)
    centers = g.centers()
    out = np.zeros(g.size)
    for r in radii:
        ints, vol = cube_integrals(g, vals, centers, np.full(g.size, r))
        np.maximum(out, ints / vol, out=out)
    return Field(g, out.reshape(g.shape))


def fractional_local_maximal(mu: DiscreteMeasure, alpha: float, rho: float) -> Field:
    """``max_r mu(Q_r(x)) / r^{n-alpha}`` over dyadic ``r`` in ``[h, rho]``.

    Masses are counted when their cell center lies strictly inside the cube.
    """
    g = mu.grid
    if not 0 < alpha < g.dim:
        raise ValueError(f"alpha must lie in (0, {g.dim})")
    radii = dyadic_radii(g.h, rho)
    out = np.zeros(g.shape)
    for r in radii:
        m = int(strict_window(r, g.h))
        np.maximum(out, window_sum(mu.mass, m) / r ** (g.dim - alpha), out=out)
    return Field(g, out)


def measure_weighted_maximal(f: Field, mu: DiscreteMeasure, rho: float,
                             lattice: CubeLattice | None = None) -> Field:
    """Uncentered maximal function of ``|f|`` relative to ``mu``.

    ``mu`` is treated as a density (``mu`` mass spread uniformly over each
    cell), so for uniform cell masses the result coincides with
    :func:`uncentered_local_maximal`.  Cubes of zero ``mu`` mass are skipped;
    cells covered only by such cubes get 0 and are logged.
    """
    g = f.grid
    if mu.grid != g:
        raise ValueError("field and measure use different grids")
    if lattice is None:
        lattice = enumerate_cubes(g, rho)
    lattice = lattice.restrict(rho)
    dens = mu.mass
    num, _ = cube_integrals(g, np.abs(f.values) * dens, lattice.centers, lattice.radii)
    den, _ = cube_integrals(g, dens, lattice.centers, lattice.radii)
    pos = den > 0
    ratio = np.where(pos, num / np.where(pos, den, 1.0), 0.0)
    if lattice.policy == "centered" and len(lattice) % g.size != 0:
        lattice = CubeLattice(g, lattice.centers, lattice.radii, lattice.rho, "custom")
    out = _scatter_max(g, lattice, ratio)
    cell = np.where(dens > 0, np.abs(f.values), 0.0)
    out = np.maximum(out, cell)
    if np.any(dens == 0):
        logger.info("%d cells carry no mu mass", int(np.sum(dens == 0)))
    return Field(g, out)
