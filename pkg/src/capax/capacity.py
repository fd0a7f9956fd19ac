"""Weighted capacities as convex programs.

Every capacity here has the form

    C(E) = inf { sum_y nu_y f_y^p : f >= 0, sum_y A_{jy} nu_y f_y >= g_j on E },

for a nonnegative kernel matrix ``A`` (rows indexed by cells of ``E``,
columns by the unknown's cells), a positive measure ``nu`` and an obstacle
``g`` (``g = 1`` for the capacity itself).  It is solved through the concave
dual

    D(mu) = p <g, mu> - (p-1) sum_y nu_y k_y^{p'},    k = A^T mu,  mu >= 0,

by accelerated projected gradient ascent with backtracking.  Any ``mu``
certifies the lower bound ``<g,mu>^p / (sum nu k^{p'})^{p-1}``; the
recovered primal ``f = k^{p'-1}``, rescaled to be feasible, certifies an
upper bound.

Instances:

* local Riesz: ``A = K(x_j - y) / w(y)``, ``nu = w h^n``, so that
  ``f = (I * mu)^{p'-1} w'`` and ``A nu f`` is the nonlinear potential;
* Bessel: the same with the matched Bessel kernel;
* space-time: ``A = t^{-(n-alpha)} chi(|x - y| < t)``,
  ``nu = w'(y) h^n dt/t`` on the product of cells and scale nodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (CubeSpec, DiscreteMeasure, Field, Grid, LogTimeGrid, cube_integrals,
                   window_sum_layers)
from .potentials import BesselKernelApprox, LocalRieszKernel, SpaceTimeKernel
from .weights import WeightField, dual_exponent

logger = logging.getLogger(__name__)

__all__ = [
    "TargetSet",
    "CapacitySolution",
    "EquilibriumMeasure",
    "ThinnessReport",
    "SolverOptions",
    "capacity_primal",
    "capacity_dual",
    "equilibrium_measure",
    "capacity_cube_formula",
    "capacity_variant_R",
    "bessel_capacity",
    "riesz_capacity",
    "thinness_diagnostic",
]


@dataclass(frozen=True, eq=False)
class TargetSet:
    """A finite set of grid cells, stored as a boolean mask."""

    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)
        object.__setattr__(self, "mask", m)

    @classmethod
    def empty(cls, grid: Grid) -> "TargetSet":
        return cls(grid, np.zeros(grid.shape, bool))

    @classmethod
    def cube(cls, grid: Grid, center, half_len: float) -> "TargetSet":
        """Cells whose centers lie strictly inside ``Q_r(center)``."""
        return cls(grid, grid.sup_distance(center) < half_len)

    @classmethod
    def box(cls, grid: Grid, lo, hi) -> "TargetSet":
        """Cells whose centers lie in the closed box ``[lo, hi]``."""
        lo = np.broadcast_to(np.asarray(lo, float), (grid.dim,))
        hi = np.broadcast_to(np.asarray(hi, float), (grid.dim,))
        c = grid.centers()
        inside = np.all((c >= lo - 1e-12) & (c <= hi + 1e-12), axis=1)
        return cls(grid, inside.reshape(grid.shape))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    def __len__(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()

    def key(self) -> bytes:
        return np.packbits(self.mask.ravel()).tobytes()

    def __and__(self, other: "TargetSet") -> "TargetSet":
        return TargetSet(self.grid, self.mask & other.mask)

    def __or__(self, other: "TargetSet") -> "TargetSet":
        return TargetSet(self.grid, self.mask | other.mask)


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule and iteration cap for the dual ascent."""

    tol: float = 1e-6
    max_iter: int = 50_000
    check_every: int = 10


@dataclass(frozen=True, eq=False)
class CapacitySolution:
    """Certified two-sided capacity bounds with primal and dual witnesses.

    Attributes
    ----------
    value : float
        The certified upper bound (a feasible primal value).
    value_upper, value_lower : float
        Primal and dual certificates, ``value_lower <= C(E) <= value_upper``.
    gap : float
        ``(value_upper - value_lower) / value_upper``.
    primal_f : ndarray
        Feasible minimizer, shaped like the unknown (cells, or scales x cells).
    dual_mu : DiscreteMeasure
        Dual measure normalized so ``||A^T mu||_{L^{p'}(nu)} = 1``; its mass
        against the obstacle is ``value_lower^{1/p}``.
    raw_mu : ndarray
        Maximizer of the dual objective; on the capacity problem its mass
        equals the capacity at optimality.
    iterations : int
    converged : bool
    residual : float
        Largest relative constraint violation before feasibility rescaling.
    """

    value: float
    value_upper: float
    value_lower: float
    gap: float
    primal_f: np.ndarray
    dual_mu: DiscreteMeasure
    raw_mu: np.ndarray
    iterations: int
    converged: bool
    residual: float
    p: float = 2.0

    def to_dict(self) -> dict:
        return {
            "value_upper": self.value_upper,
            "value_lower": self.value_lower,
            "gap": self.gap,
            "iters": self.iterations,
            "converged": self.converged,
        }


class _DenseOperator:
    """``A`` stored as dense rows over flat cells."""

    def __init__(self, rows: np.ndarray, nu: np.ndarray):
        self.A = np.ascontiguousarray(rows)
        self.nu = nu

    def adjoint(self, mu: np.ndarray) -> np.ndarray:
        return mu @ self.A

    def forward(self, f: np.ndarray) -> np.ndarray:
        return self.A @ (self.nu * f)


class _SpaceTimeOperator:
    """Matrix-free box sums over the (scale, cell) product grid."""

    def __init__(self, grid: Grid, kernel: SpaceTimeKernel, wdual: np.ndarray,
                 rows: np.ndarray):
        self.grid = grid
        t, wt, win = kernel.layers(grid)
        self.scale = t ** -(grid.dim - kernel.alpha)
        self.win = [int(m) for m in win]
        self.rows = rows
        self.nu = (wt[:, None] * (wdual.ravel() * grid.cell_volume)[None, :])
        self.shape = (len(t), grid.size)

    def adjoint(self, mu: np.ndarray) -> np.ndarray:
        full = np.zeros(self.grid.size)
        full[self.rows] = mu
        k = window_sum_layers(full.reshape(self.grid.shape), self.win)
        return k.reshape(self.shape) * self.scale[:, None]

    def forward(self, f: np.ndarray) -> np.ndarray:
        nf = (self.nu * f * self.scale[:, None]).reshape((self.shape[0],) + tuple(self.grid.shape))
        acc = window_sum_layers(nf, self.win, stacked=True).sum(axis=0)
        return acc.ravel()[self.rows]


def _objective(op, mu, g, p, q):
    k = op.adjoint(mu)
    kq1 = np.power(k, q - 1.0)
    S = float(np.sum(op.nu * kq1 * k))
    D = p * float(g @ mu) - (p - 1.0) * S
    grad = p * (g - op.forward(kq1))
    return D, grad, S, kq1


def _dual_value(op, mu, g, p, q):
    k = op.adjoint(mu)
    return p * float(g @ mu) - (p - 1.0) * float(np.sum(op.nu * np.power(k, q)))


def _bounds(op, mu, g, p, q):
    """Certified lower and upper capacity bounds from a dual iterate."""
    k = op.adjoint(mu)
    f = np.power(k, q - 1.0)
    S = float(np.sum(op.nu * f * k))
    gm = float(g @ mu)
    if S <= 0 or gm <= 0:
        return 0.0, math.inf, f, math.inf
    lower = gm**p / S ** (p - 1.0)
    u = op.forward(f)
    pos = g > 0
    if np.any(u[pos] <= 0):
        return lower, math.inf, f, math.inf
    c = float(np.max(g[pos] / u[pos]))
    upper = c**p * S
    return lower, upper, f * c, c - 1.0


class _Certificates:
    """Best lower bound (with its dual iterate) and best upper bound seen."""

    def __init__(self):
        self.lower, self.mu = -math.inf, None
        self.upper, self.f, self.viol = math.inf, None, math.inf

    def update(self, op, mu, g, p, q):
        lo, up, f, viol = _bounds(op, mu, g, p, q)
        if lo > self.lower:
            self.lower, self.mu = lo, mu
        if up < self.upper:
            self.upper, self.f, self.viol = up, f, viol

    def gap(self) -> float:
        if not math.isfinite(self.upper) or self.upper <= 0:
            return math.inf
        return (self.upper - self.lower) / self.upper


def _solve(op, g: np.ndarray, p: float, opts: SolverOptions, mu0: np.ndarray | None = None):
    q = dual_exponent(p)
    mu = np.array(g, dtype=float) if mu0 is None else np.maximum(np.asarray(mu0, float), 0.0)
    if not np.any(mu * g > 0):
        mu = np.array(g, dtype=float)

    # the best multiple c x of x has c^{p'-1} = <g,x> / S(x)
    k = op.adjoint(mu)
    S = float(np.sum(op.nu * np.power(k, q)))
    mu = mu * (float(g @ mu) / S) ** (p - 1.0)

    cert = _Certificates()
    cert.update(op, mu, g, p, q)
    D_mu = _objective(op, mu, g, p, q)[0]
    y, t_acc, L = mu.copy(), 1.0, None
    it, converged = 0, cert.gap() <= opts.tol
    while not converged and it < opts.max_iter:
        it += 1
        Dy, gy, _, _ = _objective(op, y, g, p, q)
        if L is None:
            L = max(float(np.linalg.norm(gy)) / max(float(np.linalg.norm(y)), 1e-300), 1e-300)
        L *= 0.7
        while True:
            x = np.maximum(y + gy / L, 0.0)
            dx = x - y
            Dx = _dual_value(op, x, g, p, q)
            if Dx >= Dy + float(gy @ dx) - 0.5 * L * float(dx @ dx) - 1e-14 * abs(Dy) or L > 1e300:
                break
            L *= 2.0
        if Dx < D_mu:
            # adaptive restart of the momentum
            y, t_acc = mu.copy(), 1.0
        else:
            t_next = 0.5 * (1 + math.sqrt(1 + 4 * t_acc * t_acc))
            y = x + ((t_acc - 1) / t_next) * (x - mu)
            mu, D_mu, t_acc = x, Dx, t_next
        if it % opts.check_every == 0:
            cert.update(op, mu, g, p, q)
            converged = cert.gap() <= opts.tol
    if not converged:
        cert.update(op, mu, g, p, q)
        converged = cert.gap() <= opts.tol
    if not converged:
        logger.warning("capacity solver stopped after %d iterations, gap %.3g", it, cert.gap())
    return cert, it, converged


def _package(grid: Grid, E: TargetSet, op, g, p, cert, it, converged,
             unknown_shape) -> CapacitySolution:
    lower, upper, f, viol, mu = cert.lower, cert.upper, cert.f, cert.viol, cert.mu
    q = dual_exponent(p)
    k = op.adjoint(mu)
    S = float(np.sum(op.nu * np.power(k, q)))
    norm = S ** (1.0 / q) if S > 0 else 1.0
    dual = np.zeros(grid.size)
    dual[E.indices] = mu / norm
    raw = np.zeros(grid.size)
    raw[E.indices] = mu
    # rounding can put the certificates a few ulps out of order
    gap = max((upper - lower) / upper, 0.0) if upper > 0 and math.isfinite(upper) else math.inf
    return CapacitySolution(
        value=float(upper), value_upper=float(upper), value_lower=float(lower), gap=float(gap),
        primal_f=np.asarray(f).reshape(unknown_shape), dual_mu=DiscreteMeasure(grid, dual.reshape(grid.shape)),
        raw_mu=raw.reshape(grid.shape), iterations=it, converged=converged,
        residual=float(max(viol, 0.0)) if math.isfinite(viol) else math.inf, p=p)


def _zero_solution(grid: Grid, unknown_shape, p: float) -> CapacitySolution:
    z = np.zeros(grid.shape)
    return CapacitySolution(0.0, 0.0, 0.0, 0.0, np.zeros(unknown_shape), DiscreteMeasure(grid, z),
                            z.copy(), 0, True, 0.0, p)


def _obstacle(E: TargetSet, obstacle) -> np.ndarray:
    if obstacle is None:
        return np.ones(len(E))
    g = np.asarray(obstacle.values if isinstance(obstacle, Field) else obstacle, float)
    if g.shape == tuple(E.grid.shape):
        g = g.ravel()[E.indices]
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("obstacle must be finite and nonnegative")
    return g


def _build(E: TargetSet, omega: WeightField, kernel, p: float):
    grid = E.grid
    if isinstance(kernel, SpaceTimeKernel):
        kernel.check(grid)
        wdual = omega.values ** (-1.0 / (p - 1.0))
        op = _SpaceTimeOperator(grid, kernel, wdual, E.indices)
        return op, op.shape
    if isinstance(kernel, (LocalRieszKernel, BesselKernelApprox)):
        rows = kernel.rows(grid, E.indices)
        w = omega.values.ravel()
        op = _DenseOperator(rows / w[None, :], w * grid.cell_volume)
        return op, grid.shape
    raise TypeError(f"unsupported kernel {type(kernel).__name__}")


def capacity_primal(E: TargetSet, omega: WeightField, kernel, p: float, obstacle=None,
                    options: SolverOptions | None = None, warm_start=None) -> CapacitySolution:
    """Capacity of ``E`` (or the obstacle problem for ``g = obstacle``).

    Parameters
    ----------
    E : TargetSet
    omega : WeightField
    kernel : LocalRieszKernel, BesselKernelApprox or SpaceTimeKernel
    p : float
        Exponent, ``p > 1``.
    obstacle : array or Field, optional
        Lower bound for the potential on ``E``; 1 when omitted.
    options : SolverOptions, optional
    warm_start : ndarray, optional
        Dual measure on the grid used as the starting point.

    Returns
    -------
    CapacitySolution
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if omega.grid != E.grid:
        raise ValueError("weight and target set use different grids")
    opts = options or SolverOptions()
    op, ushape = _build(E, omega, kernel, p) if not E.is_empty() else (None, None)
    if E.is_empty():
        ushape = ((kernel.layers(E.grid)[0].size,) + tuple(E.grid.shape)
                  if isinstance(kernel, SpaceTimeKernel) else E.grid.shape)
        return _zero_solution(E.grid, ushape, p)
    g = _obstacle(E, obstacle)
    if not np.any(g > 0):
        return _zero_solution(E.grid, ushape, p)
    mu0 = None
    if warm_start is not None:
        mu0 = np.asarray(warm_start, float).ravel()[E.indices]
        mu0 = np.where(g > 0, mu0, 0.0)
    cert, it, conv = _solve(op, g, p, opts, mu0)
    if isinstance(kernel, SpaceTimeKernel):
        ushape = (op.shape[0],) + tuple(E.grid.shape)
    return _package(E.grid, E, op, g, p, cert, it, conv, ushape)


def capacity_dual(E: TargetSet, omega: WeightField, kernel, p: float,
                  options: SolverOptions | None = None) -> CapacitySolution:
    """Dual form ``C(E)^{1/p} = sup { mu(E) : ||A^T mu||_{L^{p'}(nu)} <= 1 }``.

    The returned ``value`` is the dual certificate ``dual_mu(E)^p``.
    """
    sol = capacity_primal(E, omega, kernel, p, options=options)
    return CapacitySolution(sol.value_lower, sol.value_upper, sol.value_lower, sol.gap,
                            sol.primal_f, sol.dual_mu, sol.raw_mu, sol.iterations,
                            sol.converged, sol.residual, sol.p)


def riesz_capacity(E: TargetSet, omega: WeightField, alpha: float, p: float, rho: float,
                   **kw) -> CapacitySolution:
    """``R^w_{alpha,p;rho}(E)``."""
    return capacity_primal(E, omega, LocalRieszKernel(alpha, rho), p, **kw)


def capacity_variant_R(E: TargetSet, omega: WeightField, alpha: float, p: float, rho: float,
                       nodes_per_octave: int = 8, **kw) -> CapacitySolution:
    """Space-time capacity with unknowns on cells x scale nodes."""
    return capacity_primal(E, omega, SpaceTimeKernel(alpha, rho, nodes_per_octave), p, **kw)


def bessel_capacity(E: TargetSet, omega: WeightField, p: float, alpha: float,
                    c_match: float = 1.0, **kw) -> CapacitySolution:
    """Weighted Bessel capacity with the matched kernel on the grid box."""
    return capacity_primal(E, omega, BesselKernelApprox(alpha, c_match), p, **kw)


@dataclass(frozen=True, eq=False)
class EquilibriumMeasure(DiscreteMeasure):
    """Equilibrium measure with its optimality diagnostics.

    ``capacity`` is the certified upper bound; the mass equals the dual
    optimum, which matches the capacity up to the solver gap.
    """

    capacity: float = 0.0
    v_max_support: float = 0.0
    v_min_set: float = 0.0
    potential: Field | None = field(default=None, repr=False)


def equilibrium_measure(E: TargetSet, omega: WeightField, alpha: float, p: float, rho: float,
                        options: SolverOptions | None = None) -> EquilibriumMeasure:
    """Maximizer of the dual capacity problem on ``E``.

    At optimality the nonlinear potential ``V`` equals 1 on the support and
    is at least 1 on ``E``, and the total mass equals the capacity.
    """
    sol = riesz_capacity(E, omega, alpha, p, rho, options=options)
    if not sol.value > 0 or not math.isfinite(sol.value):
        raise ValueError("degenerate capacity")
    from .potentials import nonlinear_potential_V

    mu = DiscreteMeasure(E.grid, sol.raw_mu)
    V = nonlinear_potential_V(mu, omega, alpha, p, rho)
    supp = mu.mass > 0
    return EquilibriumMeasure(E.grid, sol.raw_mu, capacity=sol.value,
                              v_max_support=float(V.values[supp].max()),
                              v_min_set=float(V.values[E.mask].min()), potential=V)


def capacity_cube_formula(a, r: float, omega: WeightField, alpha: float, p: float,
                          rho: float, nodes_per_octave: int = 64) -> float:
    """``(int_r^{2 rho} w'(Q_t(a)) / t^{(n-alpha) p'} dt/t)^{1-p}``.

    Returns ``inf`` at ``r = 2 rho`` where the range is empty.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if r >= 2 * rho * (1 - 1e-12):
        return math.inf
    g = omega.grid
    q = dual_exponent(p)
    wd = omega.values ** (-1.0 / (p - 1.0))
    tg = LogTimeGrid(r, 2 * rho, nodes_per_octave)
    t = tg.nodes()
    a = np.broadcast_to(np.asarray(a, float), (g.dim,))
    val, _ = cube_integrals(g, wd, np.tile(a, (len(t), 1)), t)
    integral = float(np.sum(val / t ** ((g.dim - alpha) * q) * tg.weights()))
    return integral ** (1.0 - p)


@dataclass(frozen=True)
class ThinnessReport:
    """Capacity densities of ``E`` at ``a`` along ``t_k = 2^{-k} rho``.

    ``divergence_integral`` is the partial integral
    ``int_{t_kmax}^{rho} (t^{alpha p} / w(Q_t(a)))^{p'-1} dt/t``;
    ``partial_sums`` accumulate
    ``(2^{-alpha p k} R(E cap Q_{t_k}(a)) / w(Q_{t_k}(a)))^{p'-1}``.
    """

    point: tuple
    scales: tuple
    capacities: tuple
    divergence_integral: float
    terms: tuple
    partial_sums: tuple

    @property
    def thinness_sum(self) -> float:
        return self.partial_sums[-1] if self.partial_sums else 0.0


def thinness_diagnostic(E: TargetSet, a, omega: WeightField, alpha: float, p: float,
                        rho: float, kmax: int, options: SolverOptions | None = None) -> ThinnessReport:
    """Dyadic thinness sum and the divergence integral at ``a``."""
    g = E.grid
    if kmax > math.log2(rho / g.h) + 1e-9:
        raise ValueError("kmax exceeds log2(rho/h)")
    q = dual_exponent(p)
    a = tuple(float(v) for v in np.broadcast_to(np.asarray(a, float), (g.dim,)))
    scales, caps, terms, sums = [], [], [], []
    total = 0.0
    kernel = LocalRieszKernel(alpha, rho)
    warm = None
    for k in range(kmax + 1):
        t = 2.0**-k * rho
        Ek = E & TargetSet.cube(g, a, t)
        sol = capacity_primal(Ek, omega, kernel, p, options=options, warm_start=warm)
        warm = sol.raw_mu if not Ek.is_empty() else None
        wq = omega.mass(CubeSpec(a, t))
        term = (2.0 ** (-alpha * p * k) * sol.value / wq) ** (q - 1.0)
        total += term
        scales.append(t)
        caps.append(sol.value)
        terms.append(term)
        sums.append(total)
    tg = LogTimeGrid(2.0**-kmax * rho, rho, 16)
    t = tg.nodes()
    wq, _ = cube_integrals(g, omega.values, np.tile(np.asarray(a), (len(t), 1)), t)
    div = float(np.sum((t ** (alpha * p) / wq) ** (q - 1.0) * tg.weights()))
    return ThinnessReport(a, tuple(scales), tuple(caps), div, tuple(terms), tuple(sums))
