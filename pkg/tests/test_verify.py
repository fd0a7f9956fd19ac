import json
import math

import numpy as np
import pytest

from capax.grid import make_grid
from capax.verify import (CHECKS, BAND, CheckReport, MeasureSpec, Setup, WeightSpec, check_bessel_trivial,
                          check_csi, check_maximal_choquet, check_max_principle, check_mw,
                          check_scale_shift, check_weak_type_wolff, check_weight_algebra,
                          check_wolff_energies, random_measure, random_weight, reports_to_json,
                          run_all, run_check)
from capax.verify import _ratio

H = 1 / 32


class TestSpecs:
    @pytest.mark.parametrize("spec", [
        WeightSpec("const"), WeightSpec("power", (("a", 0.5),)), WeightSpec("exp", (("c", -1.0),)),
        WeightSpec("powexp", (("a", -0.3), ("c", 2.0))), WeightSpec("trunc", (("a", 0.3), ("c", 1.0), ("k", 1.5))),
    ])
    def test_weights_build(self, spec):
        w = spec.build(make_grid(1, H, (-1, 1)))
        assert np.all(w.values > 0)
        assert spec.label.startswith(spec.kind)

    def test_unknown_weight(self):
        with pytest.raises(ValueError):
            WeightSpec("nope").build(make_grid(1, H, (-1, 1)))

    @pytest.mark.parametrize("h", [1 / 16, 1 / 64, 1 / 256])
    def test_measure_mass_exact(self, h):
        ms = MeasureSpec((("dirac", 0.1, 0.5), ("uniform", -0.33, 0.21, 1.0), ("bump", 0.2, 0.1, 0.25)))
        mu = ms.build(make_grid(1, h, (-1, 1)))
        assert mu.total == pytest.approx(ms.total, rel=1e-12)
        assert ms.has_atoms

    def test_zero_measure(self):
        assert MeasureSpec().label == "zero" and MeasureSpec().total == 0

    def test_random_families(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            ws = random_weight(rng, 2.0)
            if "a" in dict(ws.params):
                assert abs(dict(ws.params)["a"]) < 1
            assert random_weight(rng, 1.5, "a1").build(make_grid(1, H, (-1, 1))) is not None
            ms = random_measure(rng, atoms=False)
            assert not ms.has_atoms
            for part in ms.parts:
                assert -0.5 <= part[1] <= 0.5

    def test_setup_grids(self):
        g, g2 = Setup().grids(H)
        assert g2.h == g.h / 2 and g.origin == g2.origin and g.upper == g2.upper


class TestReport:
    @pytest.mark.parametrize("lhs,rhs,expect", [(0, 0, 0), (1, 0, math.inf), (2, 4, 0.5), (-1, 3, 0)])
    def test_ratio(self, lhs, rhs, expect):
        assert _ratio(lhs, rhs) == expect

    @pytest.mark.parametrize("c0,c1,ok", [(1, 1.9, True), (1, 2.1, False), (1, 0.4, False),
                                          (0, 0, True), (1, math.inf, False)])
    def test_stability(self, c0, c1, ok):
        assert CheckReport("x", {}, [], c0, c1).stable() is ok

    def test_json_handles_inf(self):
        rep = CheckReport("x", {"v": math.inf}, [{"r": float("nan")}], 1.0, math.inf)
        d = json.loads(rep.to_json())
        assert d["params"]["v"] == "inf" and d["instances"][0]["r"] == "nan"
        assert d["verdict"] == "fail"
        assert "FAIL" in rep.summary()


class TestChecks:
    def test_mw_zero_measure(self):
        rep = check_mw(h=H, n_instances=4)
        assert rep.instances[0]["lhs"] == 0 and rep.instances[0]["rhs"] == 0
        assert all(math.isfinite(r["ratio"]) for r in rep.instances)
        assert rep.verdict
        assert all("ainf" in r for r in rep.instances)

    def test_scale_shift_equal_scales(self):
        rep = check_scale_shift(h=H, rho1=0.25, rho2=0.25)
        for r in rep.instances:
            assert r["ratio"] == pytest.approx(1.0)
        assert rep.extra["monotone_violations"] == 0

    def test_scale_shift_default(self):
        rep = check_scale_shift(h=H)
        assert rep.verdict and rep.constant >= 1

    def test_energies(self):
        rep = check_wolff_energies(h=H, n_instances=4)
        assert rep.verdict
        assert set(rep.extra["bands"]) == {"V/Vcal", "V/Wcal", "V/W", "Vcal/Wcal", "Vcal/W", "Wcal/W"}

    def test_weak_type(self):
        rep = check_weak_type_wolff(h=H, n_instances=2, levels=6)
        assert rep.instances[0]["measure"].startswith("dirac")
        for r in rep.instances:
            assert r["lhs_lower"] <= r["lhs"] * (1 + 1e-12)
        assert len(rep.extra["variant_constant"]) == 3

    def test_csi(self):
        rep = check_csi(h=H, n_instances=3, levels=8)
        assert rep.verdict
        for r in rep.instances:
            assert r["lhs_lower"] <= r["lhs"] * (1 + 1e-12)

    def test_maximal_choquet(self):
        rep = check_maximal_choquet(h=H, levels=6)
        assert set(rep.extra["constants"]) == {"strong_0.2", "strong_0.5", "strong_1", "weak_0.25"}

    def test_max_principle(self):
        rep = check_max_principle(h=H, n_instances=4)
        assert rep.extra["bound_violations"] == 0 and rep.verdict

    def test_weight_algebra(self):
        rep = check_weight_algebra(h=H, n_random=3)
        assert rep.verdict and rep.constant == 0

    def test_bessel_trivial(self):
        rep = check_bessel_trivial(h=1 / 8)
        assert rep.verdict
        for row in rep.instances:
            assert row["decay_ratio"] < 0.5
            assert row["control_ratio"] >= 0.9

    def test_unknown(self):
        with pytest.raises(KeyError):
            run_check("nope")


class TestDriver:
    def test_registry(self):
        assert set(CHECKS) == {"weight_algebra", "mw", "scale_shift", "wolff_energies",
                               "weak_type_wolff", "csi", "maximal_choquet", "max_principle",
                               "fefferman_stein", "absolute_continuity", "bessel_trivial"}

    def test_deterministic(self):
        names = ["mw", "fefferman_stein", "absolute_continuity"]
        a = reports_to_json(run_all(seed=3, h=H, names=names), 3, H)
        b = reports_to_json(run_all(seed=3, h=H, names=names), 3, H)
        assert a == b
        doc = json.loads(a)
        assert doc["seed"] == 3 and [r["check"] for r in doc["reports"]] == names

    def test_seed_changes_instances(self):
        a = run_check("mw", seed=1, h=H)
        b = run_check("mw", seed=2, h=H)
        assert a.instances != b.instances
