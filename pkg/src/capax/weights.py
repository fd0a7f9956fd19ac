"""Weights on a grid and the local Muckenhoupt constant calculus.

The local constant of a weight ``w`` at exponent ``p > 1`` and scale ``rho``
is the supremum over cubes of side at most ``rho`` of

    Avg_Q w * (Avg_Q w^{-1/(p-1)})^{p-1},

with ``Avg_Q w * max_Q w^{-1}`` at ``p = 1`` and
``Avg_Q w * exp(Avg_Q log w^{-1})`` for the ``A_inf`` constant.  Suprema are
taken over a :class:`~capax.grid.CubeLattice`, so every reported constant is
a lower bound for the continuum value, attained on the reported cube.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import (CubeLattice, CubeSpec, Field, Grid, cube_integrals, enumerate_cubes,
                   rect_integrals)

logger = logging.getLogger(__name__)

__all__ = [
    "WeightField",
    "ApReport",
    "ReverseHolderCert",
    "A1Decomposition",
    "weight_power",
    "weight_exp",
    "weight_constant",
    "weight_product",
    "weight_truncate",
    "weight_interpolate",
    "weight_sum",
    "weight_pow",
    "dual_weight",
    "dual_exponent",
    "ap_loc_constant",
    "ainf_loc_constant",
    "reverse_holder_constant",
    "reverse_holder_search",
    "extend_periodic",
    "decompose_a1",
    "truncation_factor",
    "fit_ainf_density",
    "parse_weight",
]

GAMMA_LADDER = tuple(2.0**-k for k in range(13))


class WeightField(Field):
    """Strictly positive, finite weight samples per cell."""

    def __post_init__(self):
        super().__post_init__()
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("weight values must be finite and strictly positive")

    def mass(self, cube: CubeSpec) -> float:
        """``w(Q)``, the integral of the weight over the clipped cube."""
        val, _ = cube_integrals(self.grid, self.values, np.asarray(cube.center)[None, :],
                                np.array([cube.half_len]))
        return float(val[0])


@dataclass(frozen=True)
class ApReport:
    """Measured local constant with the cube attaining it.

    ``p`` is ``inf`` for the ``A_inf`` constant.
    """

    p: float
    rho: float
    constant: float
    cube: CubeSpec

    def to_dict(self) -> dict:
        return {
            "p": "inf" if math.isinf(self.p) else self.p,
            "rho": self.rho,
            "constant": self.constant,
            "cube": self.cube.to_dict(),
        }


@dataclass(frozen=True)
class ReverseHolderCert:
    """Reverse Hölder certificate ``(Avg w^{1+g})^{1/(1+g)} <= C Avg w``.

    ``verified_on`` holds the cubes with side at most ``rho / 3`` on which the
    inequality was checked.  ``flagged`` is set when no exponent on the
    ladder validates, in which case ``gamma`` is 0.
    """

    gamma: float
    constant: float
    rho: float
    verified_on: CubeLattice
    ap_constant: float
    worst_ratio: float
    flagged: bool = False


class A1Decomposition(NamedTuple):
    k: WeightField
    f: WeightField
    epsilon: float


def dual_exponent(p: float) -> float:
    if p <= 1:
        raise ValueError("dual exponent needs p > 1")
    return p / (p - 1)


def _sup_norm_positions(grid: Grid) -> np.ndarray:
    c = grid.centers()
    return np.max(np.abs(c), axis=1).reshape(grid.shape)


def weight_power(grid: Grid, a: float) -> WeightField:
    """``|x|_inf^a`` sampled at cell centers.

    Cell centers never sit at the origin on grids offset by ``h/2``; when one
    does, the distance is clamped to ``h/2`` so the weight stays finite.
    """
    d = np.maximum(_sup_norm_positions(grid), grid.h / 2)
    return WeightField(grid, d**a)


def weight_exp(grid: Grid, c: float) -> WeightField:
    """``exp(c |x|_inf)`` sampled at cell centers."""
    return WeightField(grid, np.exp(c * _sup_norm_positions(grid)))


def weight_constant(grid: Grid, value: float = 1.0) -> WeightField:
    return WeightField(grid, np.full(grid.shape, float(value)))


def _check_same_grid(*ws):
    g = ws[0].grid
    if any(w.grid != g for w in ws[1:]):
        raise ValueError("weights live on different grids")


def weight_product(w1: WeightField, w2: WeightField, p: float) -> WeightField:
    """``w1 * w2^{1-p}``, in ``A_p`` whenever both factors are in ``A_1``."""
    _check_same_grid(w1, w2)
    return WeightField(w1.grid, w1.values * w2.values ** (1.0 - p))


def weight_truncate(w: WeightField, k: float) -> WeightField:
    """``min(w, k)``."""
    if not k > 0:
        raise ValueError("truncation level must be positive")
    return WeightField(w.grid, np.minimum(w.values, k))


def truncation_factor(p: float) -> float:
    """Constant ``C(p)`` with ``[min(w,k)]_p <= C(p) [w]_p``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if p == 1:
        return 1.0
    if p <= 2:
        return 2.0
    return 2.0 ** (p - 1)


def weight_interpolate(w0: WeightField, p0: float, w1: WeightField, p1: float,
                       theta: float) -> tuple[WeightField, float]:
    """Weight ``w`` and exponent ``p`` with ``1/p = (1-theta)/p0 + theta/p1``
    and ``w^{1/p} = w0^{(1-theta)/p0} w1^{theta/p1}``."""
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if p0 < 1 or p1 < 1:
        raise ValueError("exponents must be at least 1")
    _check_same_grid(w0, w1)
    p = 1.0 / ((1 - theta) / p0 + theta / p1)
    logw = p * ((1 - theta) / p0 * np.log(w0.values) + theta / p1 * np.log(w1.values))
    return WeightField(w0.grid, np.exp(logw)), p


def weight_sum(w1: WeightField, w2: WeightField) -> WeightField:
    _check_same_grid(w1, w2)
    return WeightField(w1.grid, w1.values + w2.values)


def weight_pow(w: WeightField, delta: float) -> WeightField:
    return WeightField(w.grid, w.values**delta)


def dual_weight(w: WeightField, p: float) -> WeightField:
    """``w' = w^{-1/(p-1)}``."""
    if p <= 1:
        raise ValueError("the dual weight needs p > 1")
    return WeightField(w.grid, w.values ** (-1.0 / (p - 1.0)))


def _averages(grid: Grid, values: np.ndarray, lattice: CubeLattice) -> np.ndarray:
    val, vol = cube_integrals(grid, values, lattice.centers, lattice.radii)
    if np.any(vol <= 0):
        raise ValueError("lattice has a cube outside the grid box")
    return val / vol


def _cube_max(grid: Grid, values: np.ndarray, lattice: CubeLattice) -> np.ndarray:
    # cells with positive overlap: cell i spans [o + i h, o + (i+1) h]
    o = np.asarray(grid.origin)
    lo = (lattice.centers - lattice.radii[:, None] - o) / grid.h
    hi = (lattice.centers + lattice.radii[:, None] - o) / grid.h
    i0 = np.clip(np.floor(lo + 1e-9).astype(int), 0, None)
    i1 = np.minimum(np.ceil(hi - 1e-9).astype(int), np.asarray(grid.shape))
    out = np.empty(len(lattice))
    if grid.dim == 1:
        for m in range(len(lattice)):
            out[m] = values[i0[m, 0]:i1[m, 0]].max()
    else:
        for m in range(len(lattice)):
            out[m] = values[i0[m, 0]:i1[m, 0], i0[m, 1]:i1[m, 1]].max()
    return out


def _per_cube_ap(w: WeightField, p: float, lattice: CubeLattice) -> np.ndarray:
    if p < 1:
        raise ValueError("p must be at least 1")
    if lattice.grid != w.grid:
        raise ValueError("lattice and weight use different grids")
    avg = _averages(w.grid, w.values, lattice)
    if p == 1:
        return avg * _cube_max(w.grid, 1.0 / w.values, lattice)
    avg_dual = _averages(w.grid, w.values ** (-1.0 / (p - 1.0)), lattice)
    return avg * avg_dual ** (p - 1.0)


def _report(q: np.ndarray, p: float, lattice: CubeLattice) -> ApReport:
    i = int(np.argmax(q))
    return ApReport(float(p), lattice.rho, float(q[i]), lattice.cube(i))


def ap_loc_constant(w: WeightField, p: float, lattice: CubeLattice) -> ApReport:
    """Local ``A_p`` constant of ``w`` over ``lattice``.

    Parameters
    ----------
    w : WeightField
    p : float
        Exponent, at least 1.
    lattice : CubeLattice
        Candidate cubes; the maximum is taken over them.

    Returns
    -------
    ApReport
    """
    return _report(_per_cube_ap(w, p, lattice), p, lattice)


def ainf_loc_constant(w: WeightField, lattice: CubeLattice) -> ApReport:
    """Local ``A_inf`` constant ``max_Q Avg_Q w * exp(Avg_Q log w^{-1})``."""
    if lattice.grid != w.grid:
        raise ValueError("lattice and weight use different grids")
    avg = _averages(w.grid, w.values, lattice)
    avg_log = _averages(w.grid, np.log(w.values), lattice)
    return _report(avg * np.exp(-avg_log), math.inf, lattice)


def reverse_holder_constant(ap_constant: float, dim: int, alpha: float = 0.5) -> float:
    """Reverse Hölder constant as a function of the measured ``A_p`` constant.

    With ``b = 1 - 3/(4 A)`` and ``L = log(3^n / alpha)`` the constant reads
    ``(1 + 1/(sqrt(b) - b))^{2L / (2L - log b)}``.  It increases with ``A``.
    """
    b = 1.0 - 0.75 / ap_constant
    L = math.log(3.0**dim / alpha)
    return (1.0 + 1.0 / (math.sqrt(b) - b)) ** (2 * L / (2 * L - math.log(b)))


def _reverse_holder_ratios(w: WeightField, lattice: CubeLattice, gamma: float) -> np.ndarray:
    avg = _averages(w.grid, w.values, lattice)
    avg_pow = _averages(w.grid, w.values ** (1.0 + gamma), lattice)
    return avg_pow ** (1.0 / (1.0 + gamma)) / avg


def reverse_holder_search(w: WeightField, p: float, lattice: CubeLattice) -> ReverseHolderCert:
    """Largest ``gamma`` on the ladder ``{2^-k : k = 0..12}`` validating the
    reverse Hölder inequality with the constant computed from the measured
    ``A_p`` constant.  Cubes with side at most ``rho/3`` are checked."""
    ap = ap_loc_constant(w, p, lattice).constant
    C = reverse_holder_constant(ap, w.grid.dim)
    small = lattice.restrict(lattice.rho / 3)
    worst = math.inf
    for gamma in GAMMA_LADDER:
        worst = float(np.max(_reverse_holder_ratios(w, small, gamma)))
        if worst <= C * (1 + 1e-12):
            return ReverseHolderCert(gamma, C, lattice.rho, small, ap, worst)
    logger.warning("reverse Hölder ladder exhausted (worst ratio %.4g vs C=%.4g)", worst, C)
    return ReverseHolderCert(0.0, C, lattice.rho, small, ap, worst, flagged=True)


def extend_periodic(w: WeightField, rho: float, target: Grid) -> WeightField:
    """Even reflection across the faces of ``[o, o+rho]^n`` followed by
    ``2 rho``-periodization, sampled on ``target``.

    ``w`` must live exactly on the cube of side ``rho`` whose lower corner is
    the grid origin, and ``target`` must share ``h`` and the origin.
    """
    g = w.grid
    n_side = int(round(rho / g.h))
    if any(s != n_side for s in g.shape) or abs(n_side * g.h - rho) > 1e-9 * rho:
        raise ValueError("weight must live on a cube of side rho")
    if abs(target.h - g.h) > 1e-12 * g.h or np.any(np.abs(np.subtract(target.origin, g.origin)) > 1e-12):
        raise ValueError("target grid must share h and origin with the weight")
    if target.dim != g.dim:
        raise ValueError("dimension mismatch")
    index = []
    for a in range(g.dim):
        i = np.arange(target.shape[a]) % (2 * n_side)
        index.append(np.where(i >= n_side, 2 * n_side - 1 - i, i))
    vals = w.values[np.ix_(*index)]
    return WeightField(target, vals)


def decompose_a1(w: WeightField, rho: float) -> A1Decomposition:
    """Factor ``w = k * (M f)^eps`` with ``M`` the uncentered local maximal
    operator at scale ``rho``.

    ``eps = 1/(1+gamma)`` comes from the reverse Hölder certificate at
    ``p = 1``, ``f = w^{1/eps}`` and ``k = f^eps / (M f)^eps <= 1``.
    """
    from .maximal import uncentered_local_maximal

    lattice = enumerate_cubes(w.grid, rho)
    cert = reverse_holder_search(w, 1.0, lattice)
    eps = 1.0 / (1.0 + cert.gamma)
    f = WeightField(w.grid, w.values ** (1.0 / eps))
    mf = uncentered_local_maximal(f, rho, lattice).values
    k = w.values / mf**eps
    return A1Decomposition(WeightField(w.grid, k), f, eps)


def fit_ainf_density(w: WeightField, lattice: CubeLattice, n_samples: int = 200,
                     seed: int = 0, margin: float = 2.0) -> tuple[float, float]:
    """Fit ``(C2, eps0)`` with ``w(A)/w(Q) <= C2 (|A|/|Q|)^eps0`` on random
    sub-rectangles ``A`` of lattice cubes.

    The exponent is the smallest observed ``log(w(A)/w(Q)) / log(|A|/|Q|)``
    divided by ``margin`` and ``C2 = margin``, leaving slack for unseen
    rectangles.
    """
    x, y = _density_samples(w, lattice, n_samples, seed)
    keep = x < 1
    slopes = np.log(y[keep]) / np.log(x[keep])
    eps0 = float(max(np.min(slopes), 1e-6) / margin)
    return margin, eps0


def _density_samples(w: WeightField, lattice: CubeLattice, n: int, seed: int):
    rng = np.random.default_rng(seed)
    g = w.grid
    idx = rng.integers(0, len(lattice), size=n)
    c = lattice.centers[idx]
    r = lattice.radii[idx]
    lo = np.maximum(c - r[:, None], np.asarray(g.origin))
    hi = np.minimum(c + r[:, None], np.asarray(g.upper))
    u = rng.uniform(size=(n, g.dim, 2))
    a_lo = lo + (hi - lo) * np.minimum(u[..., 0], u[..., 1])
    a_hi = lo + (hi - lo) * np.maximum(u[..., 0], u[..., 1])
    wa, va = rect_integrals(g, w.values, a_lo, a_hi)
    wq, vq = rect_integrals(g, w.values, lo, hi)
    good = va > 0
    return va[good] / vq[good], wa[good] / wq[good]


def parse_weight(spec: str, grid: Grid) -> WeightField:
    """Build a weight from a ``name:key=value,...`` string.

    Supported names: ``const:c=1``, ``power:a=0.5``, ``exp:c=1``,
    ``product:a1=..,c1=..,a2=..,c2=..,p=2`` (power times exponential pieces),
    ``trunc:a=..,c=..,k=..``.
    """
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"malformed weight parameter {item!r}")
        params[key.strip()] = float(val)
    name = name.strip()
    if name in ("const", "one"):
        return weight_constant(grid, params.get("c", 1.0))
    if name == "power":
        return weight_power(grid, params.get("a", 0.0))
    if name == "exp":
        return weight_exp(grid, params.get("c", 0.0))
    if name == "product":
        w1 = WeightField(grid, weight_power(grid, params.get("a1", 0.0)).values
                         * weight_exp(grid, params.get("c1", 0.0)).values)
        w2 = WeightField(grid, weight_power(grid, params.get("a2", 0.0)).values
                         * weight_exp(grid, params.get("c2", 0.0)).values)
        return weight_product(w1, w2, params.get("p", 2.0))
    if name == "trunc":
        w = WeightField(grid, weight_power(grid, params.get("a", 0.0)).values
                        * weight_exp(grid, params.get("c", 0.0)).values)
        return weight_truncate(w, params.get("k", 1.0))
    raise ValueError(f"unknown weight {name!r}")
