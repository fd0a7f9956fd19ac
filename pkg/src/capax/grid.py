"""Uniform grids, sup-norm cubes and quadrature grids in log-scale.

Every field and measure in the package lives on a :class:`Grid`, a uniform
lattice of cells of side ``h`` covering an axis-aligned box in one or two
dimensions.  Cubes are open sup-norm balls ``Q_r(x) = {y : |y - x|_inf < r}``
so the side length of ``Q_r(x)`` is ``2 r``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CELL_CAP",
    "Grid",
    "Field",
    "DiscreteMeasure",
    "CubeSpec",
    "CubeLattice",
    "LogTimeGrid",
    "make_grid",
    "enumerate_cubes",
    "cube_average",
    "cube_mass",
    "cube_integrals",
    "rect_integrals",
    "window_sum",
    "strict_window",
    "field_to_text",
    "field_from_text",
    "field_to_json",
    "field_from_json",
]

CELL_CAP = 2**22
_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of ``prod(shape)`` cells of side ``h``.

    Attributes
    ----------
    dim : int
        Ambient dimension, 1 or 2.
    h : float
        Cell side length.
    origin : tuple of float
        Lower corner of the box.
    shape : tuple of int
        Number of cells per axis.
    """

    dim: int
    h: float
    origin: tuple
    shape: tuple
    cap: int = field(default=CELL_CAP, compare=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.h > 0:
            raise ValueError(f"cell size must be positive, got {self.h}")
        if len(self.shape) != self.dim or len(self.origin) != self.dim:
            raise ValueError("shape and origin must have one entry per axis")
        if any(int(s) < 1 for s in self.shape):
            raise ValueError(f"every axis needs at least one cell, got {self.shape}")
        if self.size > self.cap:
            raise ValueError(f"{self.size} cells exceed the cap of {self.cap}")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def upper(self) -> tuple:
        return tuple(o + s * self.h for o, s in zip(self.origin, self.shape))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """Cell centers as an array of shape ``(size, dim)`` in row-major order."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def locate(self, point) -> tuple:
        """Index of the cell containing ``point`` (clamped to the box)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for a in range(self.dim):
            i = int(math.floor((point[a] - self.origin[a]) / self.h + _TOL))
            idx.append(min(max(i, 0), self.shape[a] - 1))
        return tuple(idx)

    def sup_distance(self, point) -> np.ndarray:
        """``|x - point|_inf`` for every cell center ``x``, shaped like the grid."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        d = np.zeros(self.shape)
        for a in range(self.dim):
            c = self.axis_centers(a) - point[a]
            c = c.reshape([-1 if b == a else 1 for b in range(self.dim)])
            d = np.maximum(d, np.abs(c))
        return d

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "h": self.h,
            "origin": list(self.origin),
            "shape": list(self.shape),
        }


@dataclass(frozen=True, eq=False)
class Field:
    """Real values per cell, stored with the grid shape."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(self.grid.shape):
            vals = vals.reshape(self.grid.shape)
        object.__setattr__(self, "values", vals)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative point masses, one per cell, located at cell centers."""

    grid: Grid
    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != tuple(self.grid.shape):
            m = m.reshape(self.grid.shape)
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite and nonnegative")
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_density(cls, f: Field) -> "DiscreteMeasure":
        return cls(f.grid, np.abs(f.values) * f.grid.cell_volume)

    @classmethod
    def dirac(cls, grid: Grid, points, weights=None) -> "DiscreteMeasure":
        m = np.zeros(grid.shape)
        points = np.atleast_2d(np.asarray(points, dtype=float).reshape(-1, grid.dim))
        weights = np.ones(len(points)) if weights is None else np.asarray(weights, float)
        for pt, w in zip(points, weights):
            m[grid.locate(pt)] += w
        return cls(grid, m)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def support(self) -> np.ndarray:
        return self.mass > 0


@dataclass(frozen=True)
class CubeSpec:
    """Open sup-norm cube ``Q_r(center)`` with side length ``2 r``."""

    center: tuple
    half_len: float

    def __post_init__(self):
        if not self.half_len > 0:
            raise ValueError("half_len must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def side(self) -> float:
        return 2.0 * self.half_len

    def contains(self, y) -> bool:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return bool(np.max(np.abs(y - np.asarray(self.center))) < self.half_len)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_len": self.half_len}


@dataclass(frozen=True, eq=False)
class CubeLattice:
    """Finite, ordered family of cubes standing in for ``{Q : l(Q) <= rho}``.

    ``centers`` has shape ``(m, dim)`` and ``radii`` shape ``(m,)``.
    """

    grid: Grid
    centers: np.ndarray
    radii: np.ndarray
    rho: float
    policy: str = "custom"

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, self.grid.dim)
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(r) == 0:
            raise ValueError("cube lattice is empty")
        if len(c) != len(r):
            raise ValueError("centers and radii disagree in length")
        if np.any(2 * r > self.rho * (1 + 1e-12)):
            raise ValueError("lattice contains a cube with side above rho")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def cubes(self) -> tuple:
        return tuple(CubeSpec(tuple(c), float(r)) for c, r in zip(self.centers, self.radii))

    def cube(self, i: int) -> CubeSpec:
        return CubeSpec(tuple(self.centers[i]), float(self.radii[i]))

    def restrict(self, max_side: float) -> "CubeLattice":
        """Sub-lattice of cubes with side at most ``max_side``."""
        keep = 2 * self.radii <= max_side * (1 + 1e-12)
        return CubeLattice(self.grid, self.centers[keep], self.radii[keep],
                           min(self.rho, max_side), self.policy)


@dataclass(frozen=True)
class LogTimeGrid:
    """Geometric quadrature grid on ``[t_min, t_max]`` for ``dt/t`` integrals.

    The interval is split into equal steps in ``log t`` with at least
    ``nodes_per_octave`` steps per doubling; nodes sit at the log-midpoints.
    """

    t_min: float
    t_max: float
    nodes_per_octave: int = 8

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if self.nodes_per_octave < 1:
            raise ValueError("nodes_per_octave must be positive")

    @classmethod
    def for_grid(cls, grid: Grid, rho: float, nodes_per_octave: int = 8) -> "LogTimeGrid":
        return cls(grid.h / 2, rho, nodes_per_octave)

    @property
    def count(self) -> int:
        return max(1, int(math.ceil(math.log2(self.t_max / self.t_min) * self.nodes_per_octave - 1e-9)))

    def edges(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.count + 1)

    def nodes(self) -> np.ndarray:
        e = self.edges()
        return np.sqrt(e[:-1] * e[1:])

    def weights(self) -> np.ndarray:
        """Quadrature weights for ``dt/t`` (the log step of each node)."""
        e = self.edges()
        return np.log(e[1:] / e[:-1])


def make_grid(dim: int, h: float, box, cap: int = CELL_CAP) -> Grid:
    """Build the grid that tiles ``box`` exactly with cells of side ``h``.

    Parameters
    ----------
    dim : int
        1 or 2.
    h : float
        Cell side.
    box : pair or sequence of pairs
        ``(lo, hi)`` used on every axis, or one ``(lo, hi)`` per axis.
    cap : int, optional
        Maximum number of cells.

    Raises
    ------
    ValueError
        If a side length is not an integer multiple of ``h`` or the cap is
        exceeded.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (dim, 1))
    if box.shape != (dim, 2):
        raise ValueError(f"box must give (lo, hi) per axis, got shape {box.shape}")
    shape = []
    for lo, hi in box:
        if not hi > lo:
            raise ValueError("box sides must have positive length")
        k = (hi - lo) / h
        n = int(round(k))
        if n < 1 or abs(k - n) > 1e-9 * max(1.0, k):
            raise ValueError(f"box side {hi - lo} is not a multiple of h={h}")
        shape.append(n)
    if int(np.prod(shape)) > cap:
        raise ValueError(f"{int(np.prod(shape))} cells exceed the cap of {cap}")
    return Grid(dim, float(h), tuple(float(v) for v in box[:, 0]), tuple(shape), cap)


def enumerate_cubes(grid: Grid, rho: float, policy: str = "centered") -> CubeLattice:
    """Dyadic, grid-aligned cubes with side at most ``rho``.

    Half-lengths run over ``{h, 2h, 4h, ...}`` capped at ``rho / 2``.  With
    ``policy="centered"`` every cell center carries one cube per half-length
    (cubes leaving the box are clipped by the averaging routines).  With
    ``policy="aligned"`` the cubes have corners on cell corners and lie
    inside the box.
    """
    if rho < 2 * grid.h * (1 - 1e-12):
        raise ValueError(f"rho={rho} is below 2h={2 * grid.h}")
    radii = []
    r = grid.h
    while r <= rho / 2 * (1 + 1e-12):
        radii.append(r)
        r *= 2
    centers_all = grid.centers()
    cs, rs = [], []
    if policy == "centered":
        for r in radii:
            cs.append(centers_all)
            rs.append(np.full(len(centers_all), r))
    elif policy == "aligned":
        for r in radii:
            k = int(round(r / grid.h))
            axes = []
            for a in range(grid.dim):
                starts = grid.origin[a] + np.arange(0, grid.shape[a] - 2 * k + 1) * grid.h
                axes.append(starts + r)
            if any(len(ax) == 0 for ax in axes):
                continue
            mesh = np.meshgrid(*axes, indexing="ij")
            c = np.stack([m.ravel() for m in mesh], axis=1)
            cs.append(c)
            rs.append(np.full(len(c), r))
        if not cs:
            raise ValueError("no aligned cube fits inside the box")
    else:
        raise ValueError(f"unknown policy {policy!r}")
    return CubeLattice(grid, np.concatenate(cs), np.concatenate(rs), float(rho), policy)


def _cumulative(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Integral of the piecewise-constant field from the origin, at cell corners."""
    s = np.asarray(values, dtype=float) * grid.cell_volume
    for a in range(grid.dim):
        s = np.cumsum(s, axis=a)
        pad = [(1, 0) if b == a else (0, 0) for b in range(grid.dim)]
        s = np.pad(s, pad)
    return s


def _locate_knots(grid: Grid, x: np.ndarray, axis: int):
    u = (x - grid.origin[axis]) / grid.h
    u = np.clip(u, 0.0, grid.shape[axis])
    i = np.minimum(np.floor(u).astype(int), grid.shape[axis] - 1)
    return i, u - i


def _eval_cumulative(grid: Grid, table: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # the cumulative integral is multilinear inside each cell, so
    # interpolation between corner values is exact
    if grid.dim == 1:
        i, t = _locate_knots(grid, pts[:, 0], 0)
        return table[i] + t * (table[i + 1] - table[i])
    i, s = _locate_knots(grid, pts[:, 0], 0)
    j, t = _locate_knots(grid, pts[:, 1], 1)
    return ((1 - s) * (1 - t) * table[i, j] + s * (1 - t) * table[i + 1, j]
            + (1 - s) * t * table[i, j + 1] + s * t * table[i + 1, j + 1])


def rect_integrals(grid: Grid, values: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                   table: np.ndarray | None = None):
    """Exact integrals of a cellwise-constant field over boxes ``[lo, hi]``.

    Boxes are clipped to the grid box first.

    Returns
    -------
    integral : ndarray
        Integral over each clipped box.
    volume : ndarray
        Volume of each clipped box (zero when it misses the grid box).
    """
    lo = np.maximum(np.asarray(lo, dtype=float).reshape(-1, grid.dim), np.asarray(grid.origin))
    hi = np.minimum(np.asarray(hi, dtype=float).reshape(-1, grid.dim), np.asarray(grid.upper))
    vol = np.prod(np.clip(hi - lo, 0.0, None), axis=1)
    if table is None:
        table = _cumulative(grid, values)
    if grid.dim == 1:
        val = _eval_cumulative(grid, table, hi) - _eval_cumulative(grid, table, lo)
    else:
        ll = _eval_cumulative(grid, table, lo)
        hh = _eval_cumulative(grid, table, hi)
        lh = _eval_cumulative(grid, table, np.stack([lo[:, 0], hi[:, 1]], axis=1))
        hl = _eval_cumulative(grid, table, np.stack([hi[:, 0], lo[:, 1]], axis=1))
        val = hh - lh - hl + ll
    return np.where(vol > 0, val, 0.0), vol


def cube_integrals(grid: Grid, values: np.ndarray, centers: np.ndarray,
                   radii: np.ndarray, table: np.ndarray | None = None):
    """Exact integrals of a cellwise-constant field over clipped cubes.

    Returns ``(integral, volume)`` per cube, see :func:`rect_integrals`.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, grid.dim)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
    return rect_integrals(grid, values, centers - radii[:, None],
                          centers + radii[:, None], table)


def cube_average(f: Field, cube: CubeSpec) -> float:
    """Average of ``f`` over ``cube`` clipped to the box, with exact overlaps."""
    val, vol = cube_integrals(f.grid, f.values, np.asarray(cube.center)[None, :],
                              np.array([cube.half_len]))
    if not vol[0] > 0:
        raise ValueError("cube does not meet the grid box")
    return float(val[0] / vol[0])


def cube_mass(mu: DiscreteMeasure, cube: CubeSpec) -> float:
    """Total mass of cells whose centers lie strictly inside ``cube``."""
    inside = mu.grid.sup_distance(cube.center) < cube.half_len
    return float(mu.mass[inside].sum())


def strict_window(t, h: float):
    """Largest integer ``m`` with ``m h < t``: the index half-width of the
    cells whose centers are strictly inside a cube of half-length ``t``
    centered on a cell center."""
    t = np.asarray(t, dtype=float)
    return np.ceil(t / h - 1e-9).astype(int) - 1


def window_sum(values: np.ndarray, m: int) -> np.ndarray:
    """Sum over the index window ``|j - i|_inf <= m`` (clipped at the edges)."""
    out = np.asarray(values, dtype=float)
    if m < 0:
        return np.zeros_like(out)
    for a in range(out.ndim):
        n = out.shape[a]
        c = np.cumsum(out, axis=a)
        c = np.concatenate([np.zeros_like(np.take(c, [0], axis=a)), c], axis=a)
        idx = np.arange(n)
        upper = np.minimum(idx + m + 1, n)
        lower = np.maximum(idx - m, 0)
        out = np.take(c, upper, axis=a) - np.take(c, lower, axis=a)
    return out


def window_sum_layers(values: np.ndarray, ms, stacked: bool = False) -> np.ndarray:
    """:func:`window_sum` for a stack of layers, layer ``k`` with half-width ``ms[k]``.

    ``values`` is one grid-shaped array shared by all layers, or with
    ``stacked=True`` an array of shape ``(len(ms),) + grid shape``.
    """
    ms = np.asarray(ms, dtype=int)
    T = ms.size
    out = np.asarray(values, dtype=float)
    if not stacked:
        out = np.broadcast_to(out, (T,) + out.shape)
    elif out.shape[0] != T:
        raise ValueError("stacked values need one layer per window")
    spatial = out.ndim - 1
    for a in range(spatial):
        ax = a + 1
        n = out.shape[ax]
        c = np.cumsum(out, axis=ax)
        pad = [(0, 0)] * out.ndim
        pad[ax] = (1, 0)
        c = np.pad(c, pad)
        idx = np.arange(n)[None, :]
        m = np.maximum(ms, -1)[:, None]
        upper = np.minimum(idx + m + 1, n)
        lower = np.minimum(np.maximum(idx - m, 0), upper)
        shape = [1] * out.ndim
        shape[0], shape[ax] = T, n
        out = (np.take_along_axis(c, upper.reshape(shape), axis=ax)
               - np.take_along_axis(c, lower.reshape(shape), axis=ax))
    return out


def field_to_text(f: Field) -> str:
    """Header ``dim h shape origin`` followed by row-major values, one per line."""
    g = f.grid
    header = " ".join([
        str(g.dim),
        repr(g.h),
        ",".join(str(s) for s in g.shape),
        ",".join(repr(o) for o in g.origin),
    ])
    body = "\n".join(repr(float(v)) for v in f.values.ravel())
    return header + "\n" + body + "\n"


def field_from_text(text: str) -> Field:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty field file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError("field header must read 'dim h shape origin'")
    dim = int(head[0])
    h = float(head[1])
    shape = tuple(int(s) for s in head[2].split(","))
    origin = tuple(float(o) for o in head[3].split(","))
    vals = np.array([float(v) for v in lines[1:]])
    grid = Grid(dim, h, origin, shape)
    if vals.size != grid.size:
        raise ValueError(f"expected {grid.size} values, found {vals.size}")
    return Field(grid, vals.reshape(shape))


def field_to_json(f: Field) -> str:
    d = f.grid.describe()
    d["values"] = [float(v) for v in f.values.ravel()]
    return json.dumps(d)


def field_from_json(text: str) -> Field:
    d = json.loads(text)
    grid = Grid(int(d["dim"]), float(d["h"]), tuple(d["origin"]), tuple(d["shape"]))
    return Field(grid, np.asarray(d["values"], dtype=float).reshape(grid.shape))
