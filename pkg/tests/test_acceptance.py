"""Acceptance criteria 1 to 11, each at its stated tolerance.

Criteria 4 to 9 read the report of ``capax verify --check all --seed 7``,
which criterion 11 runs twice for the byte comparison.  A summary line per
criterion is printed at the end of the session.
"""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from capax.capacity import TargetSet, riesz_capacity
from capax.choquet import CapacityOracle, choquet_integral, choquet_norm, weak_quasinorm
from capax.grid import CubeSpec, Field, enumerate_cubes, make_grid
from capax.weights import (WeightField, ainf_loc_constant, ap_loc_constant, dual_exponent,
                           dual_weight, weight_constant, weight_exp, weight_power)


@pytest.fixture(scope="module")
def verify_runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("verify")
    paths = [d / "run1.json", d / "run2.json"]
    env = dict(os.environ, CAPAX_THREADS="1")
    codes = []
    for path in paths:
        res = subprocess.run([sys.executable, "-m", "capax.cli", "verify", "--check", "all",
                              "--seed", "7", "--out", str(path)],
                             capture_output=True, text=True, env=env, timeout=600)
        codes.append(res.returncode)
    raw = [p.read_bytes() for p in paths]
    doc = json.loads(raw[0])
    return {"raw": raw, "codes": codes, "reports": {r["check"]: r for r in doc["reports"]}}


def _num(x):
    # the report writes non-finite values as strings
    return float(x)


def _stable(rep, band=(0.5, 2.0)):
    c0, c1 = _num(rep["constant"]), _num(rep["constant_refined"])
    return math.isfinite(c0) and math.isfinite(c1) and c0 > 0 and band[0] <= c1 / c0 <= band[1]


def test_criterion_01_weight_algebra(criterion):
    worst_unit, worst_dual, violations = 0.0, 0.0, 0
    for dim, h in ((1, 1 / 64), (2, 1 / 16)):
        g = make_grid(dim, h, (-1, 1))
        one = weight_constant(g)
        for rho in (0.25, 0.5, 1.0):
            lat = enumerate_cubes(g, rho)
            for p in (1.0, 1.5, 2.0, 4.0):
                worst_unit = max(worst_unit, abs(ap_loc_constant(one, p, lat).constant - 1))
            worst_unit = max(worst_unit, abs(ainf_loc_constant(one, lat).constant - 1))
    g = make_grid(1, 1 / 64, (-1, 1))
    big, small = enumerate_cubes(g, 1.0), enumerate_cubes(g, 0.25)
    rng = np.random.default_rng(1)
    ps = (1.0, 1.25, 1.5, 2.0, 3.0, 5.0)
    for _ in range(10):
        a, c = rng.uniform(-0.6, 0.6), rng.uniform(-2, 2)
        w = WeightField(g, weight_power(g, a).values * weight_exp(g, c).values)
        for p in ps[1:]:
            lhs = ap_loc_constant(dual_weight(w, p), dual_exponent(p), big).constant
            rhs = ap_loc_constant(w, p, big).constant ** (dual_exponent(p) - 1)
            worst_dual = max(worst_dual, abs(lhs / rhs - 1))
        vals = [ap_loc_constant(w, p, big).constant for p in ps]
        violations += sum(b > a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
        for p in ps:
            violations += ap_loc_constant(w, p, small).constant > ap_loc_constant(w, p, big).constant * (1 + 1e-12)
    ok = worst_unit <= 1e-12 and worst_dual <= 1e-10 and violations == 0
    criterion(1, ok, f"unit deviation {worst_unit:.1e}, duality {worst_dual:.1e}, "
                     f"monotonicity violations {violations}")
    assert ok


def test_criterion_02_solver(criterion, oracles):
    worst, worst_gap = 0.0, 0.0
    for inst in oracles["capacity_instances"]:
        assert len(inst["rows"]) <= 32
        g = make_grid(1, 2 / inst["n"], (-1, 1))
        w = WeightField(g, weight_power(g, inst["a"]).values * weight_exp(g, inst["c"]).values)
        m = np.zeros(g.size, bool)
        m[inst["rows"]] = True
        sol = riesz_capacity(TargetSet(g, m), w, inst["alpha"], inst["p"], inst["rho"])
        worst = max(worst, abs(sol.value / inst["value"] - 1))
        worst_gap = max(worst_gap, sol.gap)
    # the capacity example shipped in the README
    g = make_grid(1, 1 / 64, (-2, 2))
    sol = riesz_capacity(TargetSet.box(g, 0, 0.25), weight_power(g, 0.5), 0.5, 2.0, 1.0)
    worst_gap = max(worst_gap, sol.gap)
    ok = worst <= 1e-4 and worst_gap <= 1e-3
    criterion(2, ok, f"max rel. error vs conic oracle {worst:.1e}, max gap {worst_gap:.1e}")
    assert ok


def test_criterion_03_cube_scaling(criterion):
    ok = True
    parts = []
    for alpha, target in ((0.5, 1.0), (0.25, 2**0.5)):
        g = make_grid(1, 1 / 128, (-3, 3))
        one = weight_constant(g)
        caps = {r: riesz_capacity(TargetSet.cube(g, 0.0, r), one, alpha, 2.0, 1.0).value
                for r in (1 / 16, 1 / 8, 1 / 4)}
        for r in (1 / 16, 1 / 8):
            q = caps[2 * r] / caps[r]
            ok = ok and abs(q / target - 1) <= 0.3
            parts.append(f"a={alpha:g},r={r:g}: {q:.3f}")
    rho = 1.0
    for w_of in (weight_constant, lambda g: weight_exp(g, 1.0), lambda g: weight_power(g, -0.4)):
        bands = []
        for h in (1 / 64, 1 / 128):
            g = make_grid(1, h, (-3, 3))
            w = w_of(g)
            cap = riesz_capacity(TargetSet.cube(g, 0.0, rho), w, 0.5, 2.0, rho).value
            bands.append(cap * rho ** (0.5 * 2) / w.mass(CubeSpec((0.0,), rho)))
        ok = ok and abs(bands[1] / bands[0] - 1) <= 0.2
        parts.append(f"band {bands[0]:.4f}->{bands[1]:.4f}")
    criterion(3, ok, "; ".join(parts))
    assert ok


def test_criterion_04_mw(criterion, verify_runs):
    rep = verify_runs["reports"]["mw"]
    c0, c1 = _num(rep["constant"]), _num(rep["constant_refined"])
    ok = len(rep["instances"]) == 20 and math.isfinite(c0) and math.isfinite(c1) and c1 <= 2 * c0
    criterion(4, ok, f"20 instances, max ratio {c0:.4g} (h=1/64) -> {c1:.4g} (h=1/128)")
    assert ok


def test_criterion_05_weak_type_wolff(criterion, verify_runs):
    rep = verify_runs["reports"]["weak_type_wolff"]
    dirac = any(r["measure"].startswith("dirac") for r in rep["instances"])
    ok = len(rep["instances"]) == 10 and dirac and _stable(rep)
    criterion(5, ok, f"constant {_num(rep['constant']):.4g} -> {_num(rep['constant_refined']):.4g}, "
                     f"ratio {_num(rep['refinement_ratio']):.3f}")
    assert ok


def test_criterion_06_csi(criterion, verify_runs):
    rep = verify_runs["reports"]["csi"]
    ok = len(rep["instances"]) == 10 and _stable(rep)
    criterion(6, ok, f"constant {_num(rep['constant']):.4g} -> {_num(rep['constant_refined']):.4g}")
    assert ok


def test_criterion_07_maximal_choquet(criterion, verify_runs):
    rep = verify_runs["reports"]["maximal_choquet"]
    consts = {k: [_num(v) for v in vals] for k, vals in rep["extra"]["constants"].items()}
    ok = rep["params"]["threshold"] == pytest.approx(0.25)
    for key in ("strong_0.5", "strong_1"):
        c0, c1 = consts[key]
        ok = ok and math.isfinite(c0) and math.isfinite(c1) and 0.5 <= c1 / c0 <= 2.0
    ok = ok and all(math.isfinite(v) for v in consts["weak_0.25"])
    detail = ", ".join(f"{k} {v[0]:.4g}->{v[1]:.4g}" for k, v in sorted(consts.items()))
    criterion(7, ok, detail + " (q=0.2 reported only)")
    assert ok


def test_criterion_08_energies(criterion, verify_runs):
    rep = verify_runs["reports"]["wolff_energies"]
    ok = len(rep["instances"]) == 10 and _stable(rep)
    criterion(8, ok, f"widest band {_num(rep['constant']):.4g} -> {_num(rep['constant_refined']):.4g}")
    assert ok


def test_criterion_09_bessel(criterion, verify_runs):
    rep = verify_runs["reports"]["bessel_trivial"]
    ok = True
    parts = []
    for row in rep["instances"]:
        decay = row["decay"]
        mono = all(b <= a * (1 + 1e-6) for a, b in zip(decay, decay[1:]))
        ok = ok and row["decay_ratio"] < 0.5 and mono and row["control_ratio"] >= 0.9
        parts.append(f"h={row['h']:g}: B5/B1 {row['decay_ratio']:.2e}, control {row['control_ratio']:.3f}")
    criterion(9, ok, "; ".join(parts))
    assert ok


def test_criterion_10_choquet(criterion):
    g = make_grid(1, 1 / 16, (-1, 1))
    w = weight_exp(g, 0.5)
    C = CapacityOracle.riesz(w, 0.5, 2.0, 0.5)
    x = g.axis_centers(0)
    A = TargetSet(g, np.abs(x) < 0.25)
    B = TargetSet(g, np.abs(x) < 0.5)
    cA, cB = C(A), C(B)
    worst = 0.0
    checks = [
        (choquet_integral(Field(g, A.mask * 1.0), 1.0, C), cA),
        (choquet_integral(Field(g, 3.0 * A.mask), 1.0, C), 3.0 * cA),
        (choquet_integral(Field(g, 1.0 * B.mask + 1.0 * A.mask), 1.0, C), cB + cA),
        (choquet_integral(Field(g, 1.0 * B.mask + 1.0 * A.mask), 0.5, C), cB + (2**0.5 - 1) * cA),
        (weak_quasinorm(Field(g, A.mask * 1.0), 2.0, C), cA**0.5),
        (weak_quasinorm(Field(g, 1.0 * B.mask + 1.0 * A.mask), 1.0, C), max(cB, 2 * cA)),
    ]
    for got, want in checks:
        worst = max(worst, abs(got / want - 1))
    rng = np.random.default_rng(10)
    violations, n = 0, 0
    while n < 100:
        v = np.round(rng.random(g.shape) * (rng.random(g.shape) < 0.3), 1)
        if v.max() == 0:
            continue
        n += 1
        q = float(rng.choice([0.5, 1.0, 2.0]))
        f = Field(g, v)
        violations += weak_quasinorm(f, q, C) > choquet_norm(f, q, C) * (1 + 1e-12)
    ok = worst <= 1e-12 and violations == 0
    criterion(10, ok, f"layer-cake error {worst:.1e}, weak>strong violations {violations}/100")
    assert ok


def test_criterion_11_determinism(criterion, verify_runs):
    a, b = verify_runs["raw"]
    ok = a == b and len(a) > 0
    codes = verify_runs["codes"]
    criterion(11, ok, f"{len(a)} bytes, identical={a == b}, exit codes {codes}")
    assert ok
    assert codes == [0, 0]
