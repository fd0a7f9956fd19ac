"""Empirical checks of the inequalities of weighted local potential theory.

Every check builds its instances in continuum terms (a :class:`WeightSpec`
and a :class:`MeasureSpec` or a set given by boxes), discretizes them on a
base grid of size ``h`` and on its refinement ``h/2``, evaluates both sides of
the inequality through independent code paths, and reports the measured
constant ``max lhs/rhs`` on each grid.

A check passes when both constants are finite and their ratio lies in the
refinement band (default ``[0.5, 2]``).  Checks with an exact or structural
statement (weight algebra, maximum principles, Bessel trend) add their own
conditions, listed in the report notes.

The default domain is ``n = 1``, box ``[-1, 1]``, ``rho = 1/4``, with supports
inside ``[-1/2, 1/2]`` so that every cube used stays at distance at least
``rho`` from the boundary of the box.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .capacity import (SolverOptions, TargetSet, bessel_capacity, equilibrium_measure,
                       riesz_capacity)
from .choquet import (CapacityOracle, choquet_bounds, threshold_ladder, weak_quasinorm_bounds)
from .grid import DiscreteMeasure, Field, Grid, enumerate_cubes, make_grid
from .maximal import fractional_local_maximal, uncentered_local_maximal
from .potentials import (energy, nonlinear_potential_V, nonlinear_V_cal, riesz_convolve,
                         wolff_cal, wolff_variant)
from .weights import (WeightField, ainf_loc_constant, ap_loc_constant, dual_exponent,
                      dual_weight, fit_ainf_density, truncation_factor, weight_constant,
                      weight_exp, weight_interpolate, weight_pow, weight_power, weight_product,
                      weight_sum, weight_truncate, _density_samples)

logger = logging.getLogger(__name__)

__all__ = [
    "CheckReport",
    "WeightSpec",
    "MeasureSpec",
    "Setup",
    "CHECKS",
    "check_mw",
    "check_scale_shift",
    "check_wolff_energies",
    "check_weak_type_wolff",
    "check_csi",
    "check_maximal_choquet",
    "check_max_principle",
    "check_fefferman_stein",
    "check_weight_algebra",
    "check_absolute_continuity",
    "check_bessel_trivial",
    "run_check",
    "run_all",
    "reports_to_json",
]

BAND = (0.5, 2.0)


# ----------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class Setup:
    """Domain and default parameters shared by the checks."""

    box: tuple = (-1.0, 1.0)
    rho: float = 0.25
    alpha: float = 0.5
    p: float = 2.0
    support: tuple = (-0.5, 0.5)

    def grids(self, h: float) -> tuple[Grid, Grid]:
        return make_grid(1, h, self.box), make_grid(1, h / 2, self.box)


@dataclass(frozen=True)
class WeightSpec:
    """A weight given by a family name and parameters.

    ``const``, ``power`` (``|x|^a``), ``exp`` (``e^{c|x|}``),
    ``powexp`` (``|x|^a e^{c|x|}``) and ``trunc`` (``min(|x|^a e^{c|x|}, k)``).
    """

    kind: str
    params: tuple = ()

    @property
    def label(self) -> str:
        args = ",".join(f"{k}={v:.6g}" for k, v in self.params)
        return f"{self.kind}:{args}" if args else self.kind

    def build(self, grid: Grid) -> WeightField:
        P = dict(self.params)
        if self.kind == "const":
            return weight_constant(grid, P.get("c", 1.0))
        if self.kind == "power":
            return weight_power(grid, P["a"])
        if self.kind == "exp":
            return weight_exp(grid, P["c"])
        base = weight_power(grid, P.get("a", 0.0)).values * weight_exp(grid, P.get("c", 0.0)).values
        if self.kind == "powexp":
            return WeightField(grid, base)
        if self.kind == "trunc":
            return weight_truncate(WeightField(grid, base), P["k"])
        raise ValueError(f"unknown weight family {self.kind!r}")


def _cell_overlap(grid: Grid, lo: float, hi: float) -> np.ndarray:
    c = grid.axis_centers(0)
    h = grid.h
    return np.clip(np.minimum(c + h / 2, hi) - np.maximum(c - h / 2, lo), 0.0, None)


@dataclass(frozen=True)
class MeasureSpec:
    """A measure on the line built from parts.

    ``("dirac", x, m)``, ``("uniform", lo, hi, m)`` (mass ``m`` spread over
    ``[lo, hi]`` with exact cell overlaps) and ``("bump", c, s, m)`` (density
    proportional to ``(1 - ((x-c)/s)^2)_+^2``, sampled at cell centers).
    """

    parts: tuple = ()

    @property
    def label(self) -> str:
        if not self.parts:
            return "zero"
        return "+".join(f"{p[0]}(" + ",".join(f"{v:.4g}" for v in p[1:]) + ")" for p in self.parts)

    @property
    def total(self) -> float:
        return float(sum(p[-1] for p in self.parts))

    @property
    def has_atoms(self) -> bool:
        return any(p[0] == "dirac" for p in self.parts)

    def build(self, grid: Grid) -> DiscreteMeasure:
        if grid.dim != 1:
            raise ValueError("measure specs are one-dimensional")
        m = np.zeros(grid.shape)
        x = grid.axis_centers(0)
        for part in self.parts:
            kind = part[0]
            if kind == "dirac":
                m[grid.locate([part[1]])] += part[2]
            elif kind == "uniform":
                lo, hi, mass = part[1:]
                m += _cell_overlap(grid, lo, hi) * mass / (hi - lo)
            elif kind == "bump":
                c, s, mass = part[1:]
                d = np.clip(1 - ((x - c) / s) ** 2, 0.0, None) ** 2
                if d.sum() == 0:
                    d[int(np.argmin(np.abs(x - c)))] = 1.0
                m += mass * d / d.sum()
            else:
                raise ValueError(f"unknown measure part {kind!r}")
        return DiscreteMeasure(grid, m)


def _box_set(grid: Grid, boxes) -> TargetSet:
    """Cells whose centers lie in one of the half-open intervals ``[lo, hi)``."""
    x = grid.axis_centers(0)
    mask = np.zeros(grid.shape, bool)
    for lo, hi in boxes:
        mask |= (x >= lo) & (x < hi)
    return TargetSet(grid, mask)


def _step_field(grid: Grid, steps) -> Field:
    """``sum_k c_k chi_[lo_k, hi_k)`` sampled at cell centers."""
    x = grid.axis_centers(0)
    v = np.zeros(grid.shape)
    for lo, hi, c in steps:
        v += c * ((x >= lo) & (x < hi))
    return Field(grid, v)


def _bump_field(grid: Grid, c: float, s: float, height: float = 1.0) -> Field:
    x = grid.axis_centers(0)
    return Field(grid, height * np.clip(1 - ((x - c) / s) ** 2, 0.0, None) ** 2)


def random_weight(rng: np.random.Generator, p: float, family: str = "ap") -> WeightSpec:
    """A random weight from the power/exponential families.

    ``family="ap"`` keeps ``|a| < min(1, p - 1)``; ``family="a1"`` uses
    ``a <= 0`` so that the weight is a local ``A_1`` weight.
    """
    kind = ["power", "exp", "powexp", "trunc", "const"][int(rng.integers(0, 5))]
    amax = 0.9 * min(1.0, p - 1.0)
    if family == "a1":
        a = -float(rng.uniform(0.0, 0.8))
    else:
        a = float(rng.uniform(-amax, amax))
    c = float(rng.uniform(-3.0, 3.0))
    if kind == "power":
        return WeightSpec("power", (("a", round(a, 4)),))
    if kind == "exp":
        return WeightSpec("exp", (("c", round(c, 4)),))
    if kind == "powexp":
        return WeightSpec("powexp", (("a", round(a, 4)), ("c", round(c, 4))))
    if kind == "trunc":
        return WeightSpec("trunc", (("a", round(a, 4)), ("c", round(c, 4)),
                                    ("k", round(float(rng.uniform(0.5, 2.0)), 4))))
    return WeightSpec("const")


def random_measure(rng: np.random.Generator, atoms: bool = True, lo: float = -0.5,
                   hi: float = 0.5) -> MeasureSpec:
    """A random measure: atoms, uniform pieces or bumps inside ``[lo, hi]``."""
    kinds = ["dirac", "uniform", "bump", "sparse"] if atoms else ["uniform", "bump", "sparse"]
    kind = kinds[int(rng.integers(0, len(kinds)))]
    parts = []
    if kind == "dirac":
        for _ in range(int(rng.integers(1, 4))):
            parts.append(("dirac", round(float(rng.uniform(lo, hi)), 4),
                          round(float(rng.uniform(0.2, 1.0)), 4)))
    elif kind == "uniform":
        a, b = sorted(rng.uniform(lo, hi, size=2))
        b = max(b, a + 0.05)
        parts.append(("uniform", round(float(a), 4), round(float(min(b, hi)), 4), 1.0))
    elif kind == "bump":
        for _ in range(int(rng.integers(1, 3))):
            s = float(rng.uniform(0.05, 0.2))
            c = float(rng.uniform(lo + s, hi - s))
            parts.append(("bump", round(c, 4), round(s, 4), round(float(rng.uniform(0.3, 1.0)), 4)))
    else:
        for _ in range(int(rng.integers(2, 5))):
            a = float(rng.uniform(lo, hi - 0.04))
            parts.append(("uniform", round(a, 4), round(a + 0.04, 4),
                          round(float(rng.uniform(0.1, 0.5)), 4)))
    return MeasureSpec(tuple(parts))


# ----------------------------------------------------------------------------
# reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _ratio(lhs: float, rhs: float) -> float:
    if lhs <= 0:
        return 0.0
    if rhs <= 0:
        return math.inf
    return lhs / rhs


@dataclass
class CheckReport:
    """Outcome of one check.

    ``constant`` and ``constant_refined`` are ``max lhs/rhs`` over the
    instances on the base grid and on its refinement; ``refinement_ratio``
    is their quotient.
    """

    check: str
    params: dict
    instances: list
    constant: float
    constant_refined: float
    band: tuple = BAND
    verdict: bool = False
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def refinement_ratio(self) -> float:
        if self.constant == 0 and self.constant_refined == 0:
            return 1.0
        if self.constant == 0:
            return math.inf
        return self.constant_refined / self.constant

    def stable(self) -> bool:
        c0, c1 = self.constant, self.constant_refined
        return (math.isfinite(c0) and math.isfinite(c1)
                and self.band[0] <= self.refinement_ratio <= self.band[1])

    def to_dict(self) -> dict:
        return _jsonable({
            "check": self.check,
            "params": self.params,
            "instances": self.instances,
            "constant": self.constant,
            "constant_refined": self.constant_refined,
            "refinement_ratio": self.refinement_ratio,
            "band": list(self.band),
            "verdict": "pass" if self.verdict else "fail",
            "notes": self.notes,
            "extra": self.extra,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def summary(self) -> str:
        return (f"{self.check}: {'PASS' if self.verdict else 'FAIL'} "
                f"constant={self.constant:.6g} refined={self.constant_refined:.6g}")


def _paired_report(check: str, params: dict, rows: list, band=BAND, **kw) -> CheckReport:
    """Report from instance rows with ``lhs``/``rhs`` at ``h`` and ``lhs2``/``rhs2`` at ``h/2``."""
    for r in rows:
        r["ratio"] = _ratio(r["lhs"], r["rhs"])
        r["ratio2"] = _ratio(r["lhs2"], r["rhs2"])
    c0 = max((r["ratio"] for r in rows), default=0.0)
    c1 = max((r["ratio2"] for r in rows), default=0.0)
    rep = CheckReport(check, params, rows, c0, c1, band, **kw)
    rep.verdict = rep.stable()
    return rep


def _rng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), sum(map(ord, tag))])


def _wint(grid: Grid, values: np.ndarray, omega: WeightField) -> float:
    return float(np.sum(values * omega.values) * grid.cell_volume)


# ----------------------------------------------------------------------------
# checks


def check_mw(h: float = 1 / 64, seed: int = 0, n_instances: int = 20,
             setup: Setup = Setup()) -> CheckReport:
    """``int (I * mu)^p w`` against ``int (M_alpha mu)^p w`` for ``w`` in ``A_inf``.

    The measured constant is tracked alongside the weight's local
    ``A_inf`` constant.
    """
    rng = _rng(seed, "mw")
    a, p, rho = setup.alpha, setup.p, setup.rho
    specs = [(WeightSpec("const"), MeasureSpec()),
             (WeightSpec("const"), MeasureSpec((("dirac", 0.1, 1.0),)))]
    while len(specs) < n_instances:
        specs.append((random_weight(rng, p), random_measure(rng)))
    rows = []
    for ws, ms in specs:
        row = {"weight": ws.label, "measure": ms.label}
        for suffix, g in zip(("", "2"), setup.grids(h)):
            w, mu = ws.build(g), ms.build(g)
            I = riesz_convolve(mu, a, rho).values
            M = fractional_local_maximal(mu, a, rho).values
            row["lhs" + suffix] = _wint(g, I**p, w)
            row["rhs" + suffix] = _wint(g, M**p, w)
            if suffix == "":
                row["ainf"] = ainf_loc_constant(w, enumerate_cubes(g, rho)).constant
        rows.append(row)
    params = {"alpha": a, "p": p, "rho": rho, "h": h, "seed": seed}
    rep = _paired_report("mw", params, rows)
    rep.notes.append("pass: finite constants and refined/base ratio within the band")
    return rep


def check_scale_shift(h: float = 1 / 64, seed: int = 0, rho1: float | None = None,
                      rho2: float | None = None, setup: Setup = Setup(),
                      options: SolverOptions | None = None) -> CheckReport:
    """``R_rho1(E)`` against ``R_rho2(E)`` for ``rho1 <= rho2``.

    ``lhs/rhs = R_rho1/R_rho2`` is the reverse constant; the direct
    inequality ``R_rho2 <= R_rho1`` is counted for violations using the
    certified bounds.
    """
    rng = _rng(seed, "scale")
    a, p = setup.alpha, setup.p
    rho1 = setup.rho if rho1 is None else rho1
    rho2 = 2 * setup.rho if rho2 is None else rho2
    weights = [WeightSpec("const"), WeightSpec("exp", (("c", 1.0),)), random_weight(rng, p)]
    sets = [((-0.125, 0.125),), ((-0.5, 0.5),), ((-0.3, -0.2), (0.1, 0.15), (0.3, 0.45))]
    rows, violations = [], 0
    for ws in weights:
        for boxes in sets:
            row = {"weight": ws.label, "set": [list(b) for b in boxes]}
            for suffix, g in zip(("", "2"), setup.grids(h)):
                w, E = ws.build(g), _box_set(g, boxes)
                s1 = riesz_capacity(E, w, a, p, rho1, options=options)
                s2 = riesz_capacity(E, w, a, p, rho2, options=options)
                row["lhs" + suffix], row["rhs" + suffix] = s1.value, s2.value
                if s2.value_lower > s1.value_upper * (1 + 1e-9):
                    violations += 1
            rows.append(row)
    params = {"alpha": a, "p": p, "rho1": rho1, "rho2": rho2, "h": h, "seed": seed}
    rep = _paired_report("scale_shift", params, rows)
    rep.extra["monotone_violations"] = violations
    rep.verdict = rep.verdict and violations == 0
    rep.notes.append("pass: stable reverse constant and no violation of R_rho2 <= R_rho1")
    return rep


_ENERGY_NAMES = ("V", "Vcal", "Wcal", "W")


def _energies(mu: DiscreteMeasure, w: WeightField, a: float, p: float, rho: float) -> dict:
    return {
        "V": energy(mu, nonlinear_potential_V(mu, w, a, p, rho)),
        "Vcal": energy(mu, nonlinear_V_cal(mu, w, a, p, rho)),
        "Wcal": energy(mu, wolff_cal(mu, w, a, p, rho)),
        "W": energy(mu, wolff_variant(mu, w, a, p, rho)),
    }


def check_wolff_energies(h: float = 1 / 64, seed: int = 0, n_instances: int = 10,
                         setup: Setup = Setup()) -> CheckReport:
    """Pairwise ratios of the four energies.

    For each pair the band ``[min, max]`` of the ratio over the instances is
    measured on both grids.  The reported constant is the largest band width
    ``max/min``; the pass condition is that it is finite and refinement-stable.
    """
    rng = _rng(seed, "energies")
    a, p, rho = setup.alpha, setup.p, setup.rho
    specs = [(random_weight(rng, p), random_measure(rng, atoms=False)) for _ in range(n_instances)]
    rows = []
    per_grid = ([], [])
    for ws, ms in specs:
        row = {"weight": ws.label, "measure": ms.label}
        for i, g in enumerate(setup.grids(h)):
            e = _energies(ms.build(g), ws.build(g), a, p, rho)
            row["energies" + ("" if i == 0 else "2")] = e
            per_grid[i].append(e)
        rows.append(row)
    pairs = [(x, y) for i, x in enumerate(_ENERGY_NAMES) for y in _ENERGY_NAMES[i + 1:]]
    bands, widths = {}, ([], [])
    for x, y in pairs:
        key = f"{x}/{y}"
        bands[key] = []
        for i in range(2):
            r = np.array([e[x] / e[y] for e in per_grid[i]])
            lo, hi = float(r.min()), float(r.max())
            bands[key].append([lo, hi])
            widths[i].append(hi / lo)
    c0, c1 = max(widths[0]), max(widths[1])
    drift = max(max(abs(b[1][0] / b[0][0] - 1), abs(b[1][1] / b[0][1] - 1)) for b in bands.values())
    params = {"alpha": a, "p": p, "rho": rho, "h": h, "seed": seed}
    rep = CheckReport("wolff_energies", params, rows, c0, c1,
                      extra={"bands": bands, "envelope_drift": drift})
    rep.verdict = rep.stable()
    rep.notes.append("constant: largest max/min band width of a pairwise energy ratio")
    rep.notes.append("envelope_drift: largest relative move of a band endpoint under refinement")
    return rep


def _weak_sup(f: Field, oracle: CapacityOracle, p: float, levels: int) -> tuple[float, float]:
    """Bounds for ``sup_t t^{p-1} C({f > t})``."""
    lo, up = weak_quasinorm_bounds(f, p - 1.0, oracle, threshold_ladder(f, levels))
    return lo ** (p - 1.0), up ** (p - 1.0)


def check_weak_type_wolff(h: float = 1 / 64, seed: int = 0, n_instances: int = 10,
                          levels: int = 10, setup: Setup = Setup(),
                          options: SolverOptions | None = None) -> CheckReport:
    """``sup_t t^{p-1} C({P > t}) / mu(R^n)`` for two potential/capacity pairs.

    The main constant uses the Wolff potential at scale ``rho`` with the
    space-time capacity at scale ``2 rho``; the variant Wolff potential with
    the local Riesz capacity at scale ``rho`` is reported in ``extra``.  The
    supremum runs over a geometric threshold ladder; the upper estimate is
    used as ``lhs`` and the lower one is stored with the instance.
    """
    rng = _rng(seed, "weak")
    a, p, rho = setup.alpha, setup.p, setup.rho
    specs = [(WeightSpec("const"), MeasureSpec((("dirac", 0.0, 1.0),))),
             (random_weight(rng, p), MeasureSpec((("dirac", -0.2, 0.5), ("dirac", 0.25, 0.5))))]
    while len(specs) < n_instances:
        specs.append((random_weight(rng, p), random_measure(rng)))
    rows, variant = [], {"": [], "2": []}
    for ws, ms in specs:
        row = {"weight": ws.label, "measure": ms.label}
        for suffix, g in zip(("", "2"), setup.grids(h)):
            w, mu = ws.build(g), ms.build(g)
            total = mu.total
            Wc = wolff_cal(mu, w, a, p, rho)
            lo, up = _weak_sup(Wc, CapacityOracle.variant(w, a, p, 2 * rho, options=options), p, levels)
            row["lhs" + suffix], row["rhs" + suffix] = up, total
            row["lhs_lower" + suffix] = lo
            Wv = wolff_variant(mu, w, a, p, rho)
            lo_v, up_v = _weak_sup(Wv, CapacityOracle.riesz(w, a, p, rho, options=options), p, levels)
            row["variant" + suffix] = [lo_v / total, up_v / total]
            variant[suffix].append(up_v / total)
        rows.append(row)
    params = {"alpha": a, "p": p, "rho": rho, "h": h, "seed": seed, "levels": levels}
    rep = _paired_report("weak_type_wolff", params, rows)
    v0, v1 = max(variant[""]), max(variant["2"])
    rep.extra["variant_constant"] = [v0, v1, v1 / v0 if v0 > 0 else math.inf]
    rep.notes.append("lhs: sup_t t^(p-1) C_{2rho}({Wcal_rho > t}) with the space-time capacity")
    rep.notes.append("extra.variant_constant: same for W_rho with the Riesz capacity at rho")
    return rep


def check_csi(h: float = 1 / 64, seed: int = 0, n_instances: int = 10, levels: int = 14,
              setup: Setup = Setup(), options: SolverOptions | None = None) -> CheckReport:
    """``int_0^inf R({I * phi > t}) dt^p`` against ``int phi^p w``.

    The Choquet side is the upper layer sum over a geometric threshold
    ladder, so the measured constant is an upper estimate.
    """
    rng = _rng(seed, "csi")
    a, p, rho = setup.alpha, setup.p, setup.rho
    phis = [("step", ((-0.125, 0.125, 1.0),)),
            ("step", ((-0.4, -0.1, 1.0), (0.1, 0.3, 2.0))),
            ("step", ((0.0, 0.03125, 1.0),))]
    while len(phis) < n_instances:
        if rng.random() < 0.5:
            s = float(rng.uniform(0.05, 0.2))
            phis.append(("bump", (round(float(rng.uniform(-0.5 + s, 0.5 - s)), 4), round(s, 4))))
        else:
            lo = float(rng.uniform(-0.5, 0.3))
            phis.append(("step", ((round(lo, 4), round(lo + float(rng.uniform(0.03, 0.2)), 4),
                                   round(float(rng.uniform(0.5, 2.0)), 4)),)))
    weights = [WeightSpec("const")] + [random_weight(rng, p) for _ in range(n_instances - 1)]
    rows = []
    for (kind, args), ws in zip(phis, weights):
        row = {"weight": ws.label, "phi": [kind, _jsonable(args)]}
        for suffix, g in zip(("", "2"), setup.grids(h)):
            w = ws.build(g)
            phi = _step_field(g, args) if kind == "step" else _bump_field(g, *args)
            u = riesz_convolve(phi, a, rho)
            b = choquet_bounds(u, p, CapacityOracle.riesz(w, a, p, rho, options=options),
                               threshold_ladder(u, levels))
            row["lhs" + suffix], row["lhs_lower" + suffix] = b.upper, b.lower
            row["rhs" + suffix] = _wint(g, np.abs(phi.values) ** p, w)
        rows.append(row)
    params = {"alpha": a, "p": p, "rho": rho, "h": h, "seed": seed, "levels": levels}
    return _paired_report("csi", params, rows)


def check_maximal_choquet(h: float = 1 / 64, seed: int = 0, alpha: float = 0.5, p: float = 1.5,
                          q_strong=(0.5, 1.0), q_weak: float = 0.25, q_report: float = 0.2,
                          levels: int = 12, setup: Setup = Setup(),
                          options: SolverOptions | None = None) -> CheckReport:
    """Local maximal operator on Choquet spaces of the space-time capacity.

    Strong type ``||M f||_q <= C ||f||_q`` for ``q`` in ``q_strong``, weak
    type ``||M f||_{q,inf} <= C ||f||_q`` at the threshold ``q_weak``, and the
    strong-type ratio at ``q_report`` (reported only).  Weights are local
    ``A_1`` weights.  The left sides use upper layer sums and the right sides
    lower ones.
    """
    rng = _rng(seed, "maxchoquet")
    rho = setup.rho
    fs = [("step", ((-0.125, 0.125, 1.0),)),
          ("step", ((-0.3, -0.1, 0.5), (0.1, 0.2, 1.0))),
          ("step", ((0.0, 0.03125, 1.0),)),
          ("bump", (0.05, 0.15))]
    weights = [WeightSpec("const"), random_weight(rng, p, "a1"), random_weight(rng, p, "a1"),
               WeightSpec("power", (("a", -0.5),))]
    qs = sorted(set(tuple(q_strong) + (q_report,)))
    rows = []
    by_q = {q: ([], []) for q in qs}
    weak = ([], [])
    for (kind, args), ws in zip(fs, weights):
        row = {"weight": ws.label, "f": [kind, _jsonable(args)]}
        for i, g in enumerate(setup.grids(h)):
            w = ws.build(g)
            f = _step_field(g, args) if kind == "step" else _bump_field(g, *args)
            Mf = uncentered_local_maximal(f, rho)
            C = CapacityOracle.variant(w, alpha, p, rho, options=options)
            f_levels = None if kind == "step" else threshold_ladder(f, levels)
            m_levels = threshold_ladder(Mf, levels)
            res = {}
            for q in qs:
                num = choquet_bounds(Mf, q, C, m_levels).upper ** (1 / q)
                den = choquet_bounds(f, q, C, f_levels).lower ** (1 / q)
                res[f"strong_{q:g}"] = _ratio(num, den)
                by_q[q][i].append(res[f"strong_{q:g}"])
            num = weak_quasinorm_bounds(Mf, q_weak, C, m_levels)[1]
            den = choquet_bounds(f, q_weak, C, f_levels).lower ** (1 / q_weak)
            res[f"weak_{q_weak:g}"] = _ratio(num, den)
            weak[i].append(res[f"weak_{q_weak:g}"])
            row["h" if i == 0 else "h2"] = res
        rows.append(row)
    consts = {f"strong_{q:g}": [max(by_q[q][0]), max(by_q[q][1])] for q in qs}
    consts[f"weak_{q_weak:g}"] = [max(weak[0]), max(weak[1])]
    ok = True
    for key in [f"strong_{q:g}" for q in q_strong] + [f"weak_{q_weak:g}"]:
        c0, c1 = consts[key]
        ok = ok and math.isfinite(c0) and math.isfinite(c1) and BAND[0] <= c1 / c0 <= BAND[1]
    main = f"strong_{max(q_strong):g}"
    params = {"alpha": alpha, "p": p, "rho": rho, "h": h, "seed": seed,
              "threshold": (1 - alpha * p), "q_strong": list(q_strong), "q_weak": q_weak,
              "q_report": q_report, "levels": levels}
    rep = CheckReport("maximal_choquet", params, rows, consts[main][0], consts[main][1],
                      extra={"constants": consts})
    rep.verdict = ok
    rep.notes.append("pass: strong constants at q_strong and the weak constant at q_weak are "
                     "finite and refinement-stable; q_report is informational")
    return rep


def _support_max(values: np.ndarray, mu: DiscreteMeasure) -> float:
    supp = mu.mass > 1e-12 * mu.mass.max()
    return float(values[supp].max())


def check_max_principle(h: float = 1 / 64, seed: int = 0, n_instances: int = 8,
                        setup: Setup = Setup(), options: SolverOptions | None = None) -> CheckReport:
    """Bounded maximum principles for both Wolff potentials.

    ``lhs = max Wcal_rho``, ``rhs = max over supp(mu) of Wcal_{2 rho}``, with
    the admissible factor ``2^{(n p - alpha p)/(p-1)} [w]_{A_p;4 rho}^{1/(p-1)}``;
    and the same for ``W`` with factor ``2^{(n-alpha)p/(p-1)}``.  Equilibrium
    measures of several sets are included.
    """
    rng = _rng(seed, "maxprin")
    a, p, rho = setup.alpha, setup.p, setup.rho
    n = 1
    e = 1.0 / (p - 1.0)
    items = [(WeightSpec("const"), ("eq", ((-0.125, 0.125),))),
             (WeightSpec("exp", (("c", 1.0),)), ("eq", ((-0.4, -0.3), (0.2, 0.3)))),
             (random_weight(rng, p), ("eq", ((0.0, 0.03125),))),
             (WeightSpec("const"), ("mu", MeasureSpec((("dirac", 0.0, 1.0),))))]
    while len(items) < n_instances:
        items.append((random_weight(rng, p), ("mu", random_measure(rng))))
    rows, variant = [], ([], [])
    violations = 0
    for ws, (kind, obj) in items:
        row = {"weight": ws.label, "measure": (["equilibrium", [list(b) for b in obj]]
                                               if kind == "eq" else obj.label)}
        for i, g in enumerate(setup.grids(h)):
            suffix = "" if i == 0 else "2"
            w = ws.build(g)
            if kind == "eq":
                mu = equilibrium_measure(_box_set(g, obj), w, a, p, rho, options=options)
            else:
                mu = obj.build(g)
            lhs = float(wolff_cal(mu, w, a, p, rho).values.max())
            rhs = _support_max(wolff_cal(mu, w, a, p, 2 * rho).values, mu)
            A = ap_loc_constant(w, p, enumerate_cubes(g, 4 * rho)).constant
            bound = 2 ** ((n * p - a * p) * e) * A**e
            lv = float(wolff_variant(mu, w, a, p, rho).values.max())
            rv = _support_max(wolff_variant(mu, w, a, p, 2 * rho).values, mu)
            bound_v = 2 ** ((n - a) * p * e)
            row["lhs" + suffix], row["rhs" + suffix] = lhs, rhs
            row["bound" + suffix] = bound
            row["variant" + suffix] = [lv, rv, bound_v]
            variant[i].append(_ratio(lv, rv))
            if lhs > bound * rhs * (1 + 1e-9) or lv > bound_v * rv * (1 + 1e-9):
                violations += 1
        rows.append(row)
    params = {"alpha": a, "p": p, "rho": rho, "h": h, "seed": seed}
    rep = _paired_report("max_principle", params, rows)
    rep.extra["variant_constant"] = [max(variant[0]), max(variant[1])]
    rep.extra["bound_violations"] = violations
    rep.verdict = rep.verdict and violations == 0
    rep.notes.append("pass: stable constants and every instance within its admissible factor")
    return rep


def check_fefferman_stein(h: float = 1 / 64, seed: int = 0, n_instances: int = 10,
                          setup: Setup = Setup()) -> CheckReport:
    """``sup_lambda lambda w({M f > lambda})`` against ``int |f| M w``.

    The theoretical constant ``72^n`` is recorded, not asserted.
    """
    rng = _rng(seed, "fs")
    rho = setup.rho
    items = [(WeightSpec("exp", (("c", 1.0),)), ("step", ((-0.125, 0.125, 1.0),))),
             (WeightSpec("const"), ("step", ((0.0, 0.03125, 1.0),)))]
    while len(items) < n_instances:
        ws = random_weight(rng, 2.0)
        k = int(rng.integers(1, 4))
        steps = []
        for _ in range(k):
            lo = float(rng.uniform(-0.5, 0.4))
            steps.append((round(lo, 4), round(lo + float(rng.uniform(0.02, 0.1)), 4),
                          round(float(rng.uniform(0.1, 3.0)), 4)))
        items.append((ws, ("step", tuple(steps))))
    rows = []
    for ws, (_, steps) in items:
        row = {"weight": ws.label, "f": _jsonable(steps)}
        for suffix, g in zip(("", "2"), setup.grids(h)):
            w = ws.build(g)
            f = _step_field(g, steps)
            Mf = uncentered_local_maximal(f, rho).values.ravel()
            Mw = uncentered_local_maximal(w, rho).values
            order = np.argsort(-Mf)
            wsorted = (w.values.ravel() * g.cell_volume)[order]
            # w({Mf > lambda}) for lambda just below each value
            cum = np.cumsum(wsorted)
            lam = Mf[order]
            row["lhs" + suffix] = float(np.max(lam * cum)) if lam.size else 0.0
            row["rhs" + suffix] = _wint(g, np.abs(f.values) * Mw, WeightField(g, np.ones(g.shape)))
        rows.append(row)
    params = {"rho": rho, "h": h, "seed": seed, "theoretical_constant": 72.0}
    rep = _paired_report("fefferman_stein", params, rows)
    rep.extra["within_theoretical_constant"] = bool(max(rep.constant, rep.constant_refined) <= 72.0)
    return rep


def _algebra_battery(g: Grid, rho: float, rng: np.random.Generator, n_random: int) -> dict:
    lat = enumerate_cubes(g, rho)
    lat_half = enumerate_cubes(g, rho / 2)
    ps = [1.0, 1.25, 1.5, 2.0, 3.0, 5.0]
    tally: dict = {}

    def record(name, excess):
        cnt, worst = tally.get(name, (0, 0.0))
        tally[name] = (cnt + int(excess > 0), max(worst, float(excess)))

    def rel_excess(a, b, tol=1e-12):
        # how far a exceeds b, relative; positive means a violation
        return max(a / b - 1 - tol, 0.0)

    one = weight_constant(g)
    for p in ps:
        record("unit_ap", abs(ap_loc_constant(one, p, lat).constant - 1) > 1e-12)
    record("unit_ainf", abs(ainf_loc_constant(one, lat).constant - 1) > 1e-12)

    specs = [random_weight(rng, 2.0) for _ in range(n_random)]
    ws = [s.build(g) for s in specs]
    for w in ws:
        aps = [ap_loc_constant(w, p, lat).constant for p in ps]
        ainf = ainf_loc_constant(w, lat).constant
        for p, ap in zip(ps, aps):
            if p > 1:
                q = dual_exponent(p)
                dual = ap_loc_constant(dual_weight(w, p), q, lat).constant
                record("duality", max(abs(dual / ap ** (q - 1) - 1) - 1e-10, 0.0))
            record("ainf_le_ap", rel_excess(ainf, ap))
            record("rho_monotone", rel_excess(ap_loc_constant(w, p, lat_half).constant, ap))
            record("scale_invariance",
                   max(abs(ap_loc_constant(WeightField(g, 7.3 * w.values), p, lat).constant / ap - 1)
                       - 1e-12, 0.0))
            k = float(np.median(w.values))
            record("truncation", rel_excess(ap_loc_constant(weight_truncate(w, k), p, lat).constant,
                                            truncation_factor(p) * ap))
        for p1, p2, a1, a2 in zip(ps, ps[1:], aps, aps[1:]):
            record("p_monotone", rel_excess(a2, a1))
        for delta in (0.25, 0.5, 0.75):
            for p, ap in zip(ps, aps):
                pd = delta * p + 1 - delta
                record("power_lemma",
                       rel_excess(ap_loc_constant(weight_pow(w, delta), pd, lat).constant, ap**delta))
    for w1, w2 in zip(ws, ws[1:]):
        a1_1 = ap_loc_constant(w1, 1.0, lat).constant
        a1_2 = ap_loc_constant(w2, 1.0, lat).constant
        for p in ps[1:]:
            record("product", rel_excess(ap_loc_constant(weight_product(w1, w2, p), p, lat).constant,
                                         a1_1 * a1_2 ** (p - 1)))
        for p1, p2 in ((1.0, 2.0), (1.5, 3.0), (2.0, 2.0)):
            s = ap_loc_constant(weight_sum(w1, w2), max(p1, p2), lat).constant
            record("sum", rel_excess(s, ap_loc_constant(w1, p1, lat).constant
                                     + ap_loc_constant(w2, p2, lat).constant))
        for p0, p1, theta in ((1.5, 3.0, 0.3), (2.0, 2.0, 0.5), (1.25, 5.0, 0.8)):
            wi, pi = weight_interpolate(w1, p0, w2, p1, theta)
            rhs = (ap_loc_constant(w1, p0, lat).constant ** ((1 - theta) * pi / p0)
                   * ap_loc_constant(w2, p1, lat).constant ** (theta * pi / p1))
            record("interpolation", rel_excess(ap_loc_constant(wi, pi, lat).constant, rhs))
    # A_inf density characterization: fit on one sample, test on another
    for i, w in enumerate(ws):
        C2, eps0 = fit_ainf_density(w, lat, 200, seed=i)
        x, y = _density_samples(w, lat, 200, 1000 + i)
        record("ainf_density", float(np.max(np.maximum(y - C2 * x**eps0, 0.0))))
    return {k: {"violations": v[0], "worst_excess": v[1]} for k, v in sorted(tally.items())}


def check_weight_algebra(h: float = 1 / 64, seed: int = 0, n_random: int = 10,
                         setup: Setup = Setup()) -> CheckReport:
    """The local Muckenhoupt constant calculus on the cube lattice.

    ``constant`` is the total number of violations on each grid; the check
    passes when both totals are zero.
    """
    rows, totals = [], []
    for g in setup.grids(h):
        tally = _algebra_battery(g, setup.rho, _rng(seed, "algebra"), n_random)
        rows.append({"h": g.h, "properties": tally})
        totals.append(sum(v["violations"] for v in tally.values()))
    params = {"rho": setup.rho, "h": h, "seed": seed, "n_random": n_random}
    rep = CheckReport("weight_algebra", params, rows, float(totals[0]), float(totals[1]))
    rep.verdict = totals[0] == 0 and totals[1] == 0
    rep.notes.append("constant: number of violated property instances; pass iff zero")
    return rep


def check_absolute_continuity(h: float = 1 / 64, seed: int = 0, setup: Setup = Setup(),
                              options: SolverOptions | None = None) -> CheckReport:
    """``w(E)`` against ``R(E)`` on shrinking cubes and shrinking unions.

    The ratio ``w(E)/R(E)`` stays bounded; ``|E|`` is stored alongside.
    """
    rng = _rng(seed, "abscont")
    a, p, rho = setup.alpha, setup.p, setup.rho
    weights = [WeightSpec("const"), WeightSpec("exp", (("c", 2.0),)), random_weight(rng, p)]
    families = []
    for k in range(4):
        r = rho / 2 * 2.0**-k
        families.append(("cube", ((0.1 - r, 0.1 + r),)))
    for k in range(3):
        r = rho / 8 * 2.0**-k
        families.append(("union", tuple((c - r, c + r) for c in (-0.35, 0.0, 0.3))))
    rows = []
    for ws in weights:
        for kind, boxes in families:
            row = {"weight": ws.label, "family": kind, "set": [list(b) for b in boxes]}
            for suffix, g in zip(("", "2"), setup.grids(h)):
                w, E = ws.build(g), _box_set(g, boxes)
                row["lhs" + suffix] = float(w.values[E.mask].sum() * g.cell_volume)
                row["rhs" + suffix] = riesz_capacity(E, w, a, p, rho, options=options).value
                row["lebesgue" + suffix] = len(E) * g.cell_volume
            rows.append(row)
    params = {"alpha": a, "p": p, "rho": rho, "h": h, "seed": seed}
    return _paired_report("absolute_continuity", params, rows)


def _bessel_series(h: float, weight: Callable, p: float, alpha: float, margin: float,
                   options) -> list:
    out = []
    for N in range(1, 6):
        half = N + margin
        g = make_grid(1, h, (-half, half))
        E = TargetSet.cube(g, 0.0, N)
        out.append(bessel_capacity(E, weight(g), p, alpha, options=options).value)
    return out


def check_bessel_trivial(p: float = 2.0, h: float = 1 / 16, alpha: float = 0.5,
                         margin: float = 1.0, options: SolverOptions | None = None) -> CheckReport:
    """``B(Q_N(0))`` for ``w = e^{-3p|x|}``, ``N = 1..5``, with the control ``w = 1``.

    The box grows with the cube (``[-(N+margin), N+margin]``) to stand in
    for the whole space.  Pass: ``B(Q_5)/B(Q_1) < 0.5``, the sequence is
    nonincreasing, and the control reaches at least 0.9 of its
    volume-plus-boundary prediction ``B(Q_1) + (N-1)(B(Q_2) - B(Q_1))``
    (the affine law in ``|Q_N|`` fitted at ``N = 1, 2``), on both grids.
    """
    rows = []
    ok = True
    consts = []
    for hh in (h, h / 2):
        decay = _bessel_series(hh, lambda g: weight_exp(g, -3.0 * p), p, alpha, margin, options)
        ctrl = _bessel_series(hh, weight_constant, p, alpha, margin, options)
        ratio = decay[-1] / decay[0]
        monotone = all(b <= a * (1 + 1e-6) for a, b in zip(decay, decay[1:]))
        pred = ctrl[0] + 4 * (ctrl[1] - ctrl[0])
        ctrl_ratio = ctrl[-1] / pred
        rows.append({"h": hh, "decay": decay, "control": ctrl, "decay_ratio": ratio,
                     "monotone": monotone, "control_prediction": pred,
                     "control_ratio": ctrl_ratio, "control_volume_ratio": ctrl[-1] / (5 * ctrl[0])})
        ok = ok and ratio < 0.5 and monotone and ctrl_ratio >= 0.9
        consts.append(ratio)
    params = {"p": p, "alpha": alpha, "h": h, "margin": margin, "weight": f"exp:c={-3 * p:g}"}
    rep = CheckReport("bessel_trivial", params, rows, consts[0], consts[1], band=(0.0, math.inf))
    rep.verdict = ok
    rep.notes.append("constant: B(Q_5)/B(Q_1) for the decaying weight")
    return rep


# ----------------------------------------------------------------------------
# driver


CHECKS: dict[str, Callable] = {
    "weight_algebra": check_weight_algebra,
    "mw": check_mw,
    "scale_shift": check_scale_shift,
    "wolff_energies": check_wolff_energies,
    "weak_type_wolff": check_weak_type_wolff,
    "csi": check_csi,
    "maximal_choquet": check_maximal_choquet,
    "max_principle": check_max_principle,
    "fefferman_stein": check_fefferman_stein,
    "absolute_continuity": check_absolute_continuity,
    "bessel_trivial": check_bessel_trivial,
}


def run_check(name: str, seed: int = 0, h: float = 1 / 64) -> CheckReport:
    """Run one registered check.  The Bessel check uses its own grid sizes."""
    if name not in CHECKS:
        raise KeyError(f"unknown check {name!r}; choose from {sorted(CHECKS)}")
    if name == "bessel_trivial":
        return check_bessel_trivial()
    return CHECKS[name](h=h, seed=seed)


def run_all(seed: int = 0, h: float = 1 / 64, names=None) -> list[CheckReport]:
    names = list(CHECKS) if names is None else list(names)
    out = []
    for name in names:
        logger.info("running %s", name)
        out.append(run_check(name, seed=seed, h=h))
    return out


def reports_to_json(reports: list[CheckReport], seed: int, h: float) -> str:
    doc = {"version": __version__, "seed": seed, "h": h,
           "reports": [r.to_dict() for r in reports],
           "all_pass": all(r.verdict for r in reports)}
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"
