"""Choquet integrals and quasi-norms with respect to a capacity.

For a nonnegative grid function ``f`` with distinct positive values
``v_1 < ... < v_m`` (and ``v_0 = 0``) the layer cake is a finite sum,

    int f^q dC = sum_k (v_k^q - v_{k-1}^q) C({f > v_{k-1}}),

so one capacity solve per distinct value suffices.  For fields with many
distinct values a coarser threshold ladder gives certified lower and upper
sums instead.  Level sets are strict throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .capacity import CapacitySolution, SolverOptions, TargetSet, capacity_primal
from .grid import Field, enumerate_cubes
from .potentials import BesselKernelApprox, LocalRieszKernel, SpaceTimeKernel
from .weights import WeightField, ainf_loc_constant, dual_weight

logger = logging.getLogger(__name__)

__all__ = [
    "CapacityOracle",
    "LayerRow",
    "ChoquetBounds",
    "choquet_integral",
    "choquet_bounds",
    "choquet_norm",
    "weak_quasinorm",
    "weak_quasinorm_bounds",
    "c_functional",
    "threshold_ladder",
]


class CapacityOracle:
    """Memoized set function ``E -> C(E)``.

    ``solver`` maps a :class:`TargetSet` (and an optional warm-start dual
    measure) to a :class:`CapacitySolution` or a plain float.  Values are the
    certified upper bounds.  Each new query is compared against cached sets
    that contain it or are contained in it, and monotonicity violations
    beyond ``slack`` are recorded in ``violations``.

    Examples
    --------
    >>> from capax.grid import make_grid
    >>> g = make_grid(1, 0.25, (0, 1))
    >>> C = CapacityOracle(lambda E, warm=None: float(len(E)))
    >>> C(TargetSet.box(g, 0, 0.5))
    2.0
    >>> C.calls, C.hits
    (1, 0)
    """

    def __init__(self, solver: Callable, slack: float = 1e-5, name: str = "capacity"):
        self._solver = solver
        self.slack = slack
        self.name = name
        self._memo: dict[bytes, tuple[TargetSet, float, float]] = {}
        self._warm: dict[bytes, np.ndarray] = {}
        self.calls = 0
        self.hits = 0
        self.violations: list[tuple[float, float]] = []
        self.unconverged = 0

    @classmethod
    def from_kernel(cls, omega: WeightField, kernel, p: float,
                    options: SolverOptions | None = None, name: str = "capacity"):
        def solve(E, warm=None):
            return capacity_primal(E, omega, kernel, p, options=options, warm_start=warm)
        return cls(solve, name=name)

    @classmethod
    def riesz(cls, omega: WeightField, alpha: float, p: float, rho: float,
              options: SolverOptions | None = None):
        """The local Riesz capacity ``R``."""
        return cls.from_kernel(omega, LocalRieszKernel(alpha, rho), p, options, "riesz")

    @classmethod
    def variant(cls, omega: WeightField, alpha: float, p: float, rho: float,
                nodes_per_octave: int = 8, options: SolverOptions | None = None):
        """The space-time capacity."""
        return cls.from_kernel(omega, SpaceTimeKernel(alpha, rho, nodes_per_octave), p,
                               options, "variant")

    @classmethod
    def bessel(cls, omega: WeightField, alpha: float, p: float, c_match: float = 1.0,
               options: SolverOptions | None = None):
        return cls.from_kernel(omega, BesselKernelApprox(alpha, c_match), p, options, "bessel")

    def _nearest_warm(self, E: TargetSet):
        # the smallest cached superset gives a good starting measure
        best, best_size = None, math.inf
        for key, (S, _, _) in self._memo.items():
            if len(S) < best_size and len(S) >= len(E) and not np.any(E.mask & ~S.mask):
                best, best_size = key, len(S)
        return None if best is None else self._warm.get(best)

    def _check_monotone(self, E: TargetSet, up: float, lo: float):
        for S, s_up, s_lo in self._memo.values():
            if len(S) <= len(E) and not np.any(S.mask & ~E.mask):
                if s_lo > up * (1 + self.slack) + 1e-300:
                    self.violations.append((s_lo, up))
            elif len(S) >= len(E) and not np.any(E.mask & ~S.mask):
                if lo > s_up * (1 + self.slack) + 1e-300:
                    self.violations.append((lo, s_up))

    def bounds(self, E: TargetSet) -> tuple[float, float]:
        """``(lower, upper)`` certificates for ``C(E)``."""
        if E.is_empty():
            return 0.0, 0.0
        key = E.key()
        if key in self._memo:
            self.hits += 1
            _, up, lo = self._memo[key]
            return lo, up
        self.calls += 1
        warm = self._nearest_warm(E)
        try:
            res = self._solver(E, warm)
        except TypeError:
            res = self._solver(E)
        if isinstance(res, CapacitySolution):
            up, lo = res.value_upper, res.value_lower
            if not res.converged:
                self.unconverged += 1
            self._warm[key] = res.raw_mu
        else:
            up = lo = float(res)
        self._check_monotone(E, up, lo)
        self._memo[key] = (E, up, lo)
        return lo, up

    def __call__(self, E: TargetSet) -> float:
        return self.bounds(E)[1]


@dataclass(frozen=True)
class LayerRow:
    """One layer ``(v_lo, v_hi]`` of the layer cake."""

    v_lo: float
    v_hi: float
    cap_lower: float
    cap_upper: float
    weight: float

    @property
    def lower(self) -> float:
        return self.weight * self.cap_lower

    @property
    def upper(self) -> float:
        return self.weight * self.cap_upper


@dataclass(frozen=True)
class ChoquetBounds:
    """Lower and upper layer sums with the per-layer breakdown."""

    lower: float
    upper: float
    rows: tuple = field(default=(), repr=False)

    def to_rows(self) -> list[dict]:
        return [{"v_lo": r.v_lo, "v_hi": r.v_hi, "cap_lower": r.cap_lower,
                 "cap_upper": r.cap_upper, "weight": r.weight} for r in self.rows]


def _values(f) -> tuple:
    if isinstance(f, Field):
        return f.grid, np.abs(np.asarray(f.values, float))
    raise TypeError("expected a Field")


def threshold_ladder(f: Field, levels: int = 16, ratio: float = 2.0**-0.5) -> np.ndarray:
    """Geometric thresholds ``max f * ratio^k``, ``k < levels``, increasing."""
    _, v = _values(f)
    top = float(v.max())
    if top <= 0:
        return np.zeros(0)
    return top * ratio ** np.arange(levels - 1, -1, -1.0)


def choquet_bounds(f: Field, q: float, C: CapacityOracle, levels=None) -> ChoquetBounds:
    """Layer sums of ``int |f|^q dC`` over the thresholds ``levels``.

    With thresholds ``0 = v_0 < v_1 < ... < v_m`` the sums

        lower = sum_k (v_k^q - v_{k-1}^q) C({f >= v_k}),
        upper = sum_k (v_k^q - v_{k-1}^q) C({f > v_{k-1}})

    bracket the integral when ``v_m >= max f``.  With ``levels=None`` the
    distinct values of ``f`` are used and both sums equal the exact integral.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    g, v = _values(f)
    if levels is None:
        lv = np.unique(v[v > 0])
    else:
        lv = np.unique(np.asarray(levels, float))
        lv = lv[lv > 0]
        top = float(v.max())
        if lv.size == 0 or lv[-1] < top:
            lv = np.append(lv, top)
    rows = []
    lo_sum = up_sum = 0.0
    prev = 0.0
    for vk in lv:
        w = vk**q - prev**q
        if levels is None:
            # for the distinct values both level sets coincide
            c_lo, c_up = C.bounds(TargetSet(g, v > prev))
            c_lo_set = c_lo
        else:
            c_lo_set = C.bounds(TargetSet(g, v >= vk))[0]
            c_up = C.bounds(TargetSet(g, v > prev))[1]
        rows.append(LayerRow(float(prev), float(vk), float(c_lo_set), float(c_up), float(w)))
        lo_sum += w * c_lo_set
        up_sum += w * c_up
        prev = vk
    return ChoquetBounds(float(lo_sum), float(up_sum), tuple(rows))


def choquet_integral(f: Field, q: float, C: CapacityOracle) -> float:
    """``int |f|^q dC`` by the exact layer cake over the distinct values of ``f``.

    The capacity of each level set enters through its certified upper bound.
    """
    return choquet_bounds(f, q, C).upper


def choquet_norm(f: Field, q: float, C: CapacityOracle, levels=None, side: str = "upper") -> float:
    """``(int |f|^q dC)^{1/q}`` from the chosen layer sum."""
    b = choquet_bounds(f, q, C, levels)
    return (b.upper if side == "upper" else b.lower) ** (1.0 / q)


def weak_quasinorm_bounds(f: Field, q: float, C: CapacityOracle, levels=None) -> tuple[float, float]:
    """Bounds for ``sup_t t C({|f| > t})^{1/q}`` over a threshold ladder.

    On ``[v_{k-1}, v_k)`` the level set lies between ``{f >= v_k}`` and
    ``{f > v_{k-1}}``, so ``max_k v_k C({f >= v_k})^{1/q}`` is a lower bound
    and ``max_k v_k C({f > v_{k-1}})^{1/q}`` an upper bound.  Both are exact
    for the distinct values of ``f``.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    g, v = _values(f)
    if levels is None:
        lv = np.unique(v[v > 0])
    else:
        lv = np.unique(np.asarray(levels, float))
        lv = lv[lv > 0]
        if lv.size == 0 or lv[-1] < float(v.max()):
            lv = np.append(lv, float(v.max()))
    lo = up = 0.0
    prev = 0.0
    for vk in lv:
        c_up = C.bounds(TargetSet(g, v > prev))[1]
        c_lo = C.bounds(TargetSet(g, v >= vk))[0]
        lo = max(lo, vk * c_lo ** (1.0 / q))
        up = max(up, vk * c_up ** (1.0 / q))
        prev = vk
    return float(lo), float(up)


def weak_quasinorm(f: Field, q: float, C: CapacityOracle) -> float:
    """``sup_t t C({|f| > t})^{1/q}``, exact over the distinct values of ``f``."""
    return weak_quasinorm_bounds(f, q, C)[1]


def c_functional(phi: Field, omega: WeightField, kernel, p: float,
                 options: SolverOptions | None = None,
                 ainf_threshold: float | None = None) -> float:
    """Obstacle functional: the least ``||f||^p_{L^p(w)}`` with potential
    at least ``|phi|^{1/p}`` on the support of ``phi``.

    When ``ainf_threshold`` is given, the local A-infinity constant of the
    dual weight is measured on the kernel's scale and a warning is logged
    if it exceeds the threshold.
    """
    g, v = _values(phi)
    if ainf_threshold is not None and hasattr(kernel, "rho"):
        lat = enumerate_cubes(g, kernel.rho)
        a = ainf_loc_constant(dual_weight(omega, p), lat).constant
        if a > ainf_threshold:
            logger.warning("dual weight A-infinity constant %.3g exceeds %.3g", a, ainf_threshold)
    E = TargetSet(g, v > 0)
    if E.is_empty():
        return 0.0
    return capacity_primal(E, omega, kernel, p, obstacle=v ** (1.0 / p), options=options).value
