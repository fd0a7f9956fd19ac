import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from capax.grid import (CubeLattice, CubeSpec, DiscreteMeasure, Field, LogTimeGrid, cube_average,
                        cube_integrals, cube_mass, enumerate_cubes, field_from_json,
                        field_from_text, field_to_json, field_to_text, make_grid, strict_window,
                        window_sum, window_sum_layers)


class TestMakeGrid:
    @pytest.mark.parametrize("dim,h,box,cells", [
        (1, 0.25, (0, 1), 4),
        (2, 0.5, (0, 1), 4),
        (2, 0.25, [(0, 1), (-1, 1)], 32),
    ])
    def test_cell_counts(self, dim, h, box, cells):
        assert make_grid(dim, h, box).size == cells

    def test_non_multiple_box(self):
        with pytest.raises(ValueError):
            make_grid(1, 0.3, (0, 1))

    def test_cap(self):
        with pytest.raises(ValueError):
            make_grid(2, 1 / 1024, (0, 4), cap=2**20)

    @pytest.mark.parametrize("dim", [0, 3])
    def test_dimension(self, dim):
        with pytest.raises(ValueError):
            make_grid(dim, 0.5, (0, 1))

    def test_centers_row_major(self):
        g = make_grid(2, 0.5, (0, 1))
        np.testing.assert_allclose(g.centers(), [[.25, .25], [.25, .75], [.75, .25], [.75, .75]])

    def test_locate_and_clamp(self):
        g = make_grid(1, 0.25, (0, 1))
        assert g.locate([0.3]) == (1,)
        assert g.locate([5.0]) == (3,)


class TestEnumerateCubes:
    def test_one_dimensional_radii(self):
        g = make_grid(1, 1.0, (0, 8))
        lat = enumerate_cubes(g, 4.0)
        assert len(lat) == 16
        assert sorted(set(lat.radii.tolist())) == [1.0, 2.0]

    def test_rho_too_small(self):
        with pytest.raises(ValueError):
            enumerate_cubes(make_grid(1, 1.0, (0, 8)), 1.0)

    def test_two_dimensional(self):
        lat = enumerate_cubes(make_grid(2, 1.0, (0, 4)), 2.0)
        assert len(lat) == 16
        assert np.all(lat.radii == 1.0)

    def test_aligned_cubes_inside_box(self):
        g = make_grid(1, 0.25, (0, 2))
        lat = enumerate_cubes(g, 1.0, "aligned")
        assert np.all(lat.centers[:, 0] - lat.radii >= -1e-12)
        assert np.all(lat.centers[:, 0] + lat.radii <= 2 + 1e-12)
        assert np.all(2 * lat.radii <= 1.0 + 1e-12)

    def test_deterministic(self):
        g = make_grid(2, 0.25, (0, 1))
        a, b = enumerate_cubes(g, 0.5), enumerate_cubes(g, 0.5)
        np.testing.assert_array_equal(a.centers, b.centers)
        np.testing.assert_array_equal(a.radii, b.radii)

    def test_lattice_rejects_large_cubes(self):
        g = make_grid(1, 0.25, (0, 2))
        with pytest.raises(ValueError):
            CubeLattice(g, np.array([[1.0]]), np.array([0.75]), 1.0, "custom")


class TestCubeAverage:
    def test_constant(self):
        g = make_grid(2, 0.25, (0, 2))
        f = Field(g, np.full(g.shape, 3.5))
        assert cube_average(f, CubeSpec((0.8, 1.1), 0.3)) == pytest.approx(3.5, rel=1e-14)

    def test_indicator_symmetry(self):
        g = make_grid(1, 0.125, (0, 2))
        f = Field(g, (g.axis_centers(0) < 1).astype(float))
        assert cube_average(f, CubeSpec((1.0,), 1.0)) == pytest.approx(0.5, abs=1e-14)

    @pytest.mark.parametrize("h", [1 / 8, 1 / 32, 1 / 128])
    def test_linear_weight(self, h):
        # the exact integral of x over [0, 1] is 1/2
        g = make_grid(1, h, (0, 1))
        f = Field(g, g.axis_centers(0))
        assert abs(cube_average(f, CubeSpec((0.5,), 0.5)) - 0.5) <= h

    def test_partial_cells(self):
        g = make_grid(1, 1.0, (0, 4))
        f = Field(g, np.array([0.0, 1.0, 2.0, 3.0]))
        # (0.5 * 1 + 1 * 2 + 0.25 * 3) / 1.75
        assert cube_average(f, CubeSpec((2.375,), 0.875)) == pytest.approx(3.25 / 1.75)

    def test_clipped_to_box(self):
        g = make_grid(1, 0.5, (0, 1))
        f = Field(g, np.array([1.0, 3.0]))
        assert cube_average(f, CubeSpec((0.0,), 0.5)) == pytest.approx(1.0)

    def test_empty_intersection(self):
        g = make_grid(1, 0.5, (0, 1))
        with pytest.raises(ValueError):
            cube_average(Field(g, np.ones(2)), CubeSpec((5.0,), 0.5))

    @given(st.lists(st.floats(0, 10), min_size=16, max_size=16),
           st.lists(st.floats(0, 5), min_size=16, max_size=16),
           st.floats(0.1, 1.9), st.floats(0.05, 1.0))
    def test_monotone(self, f, d, c, r):
        g = make_grid(1, 0.125, (0, 2))
        f = np.array(f)
        lo, hi = Field(g, f), Field(g, f + np.array(d))
        Q = CubeSpec((c,), r)
        assert cube_average(lo, Q) <= cube_average(hi, Q) + 1e-12


class TestCubeMass:
    def test_zero(self):
        g = make_grid(1, 0.25, (-1, 1))
        assert cube_mass(DiscreteMeasure(g, np.zeros(g.shape)), CubeSpec((0.0,), 1.0)) == 0

    def test_unit_dirac(self):
        g = make_grid(1, 0.25, (-1, 1))
        mu = DiscreteMeasure.dirac(g, [0.1])
        assert cube_mass(mu, CubeSpec((0.0,), 1.0)) == 1.0

    @pytest.mark.parametrize("h", [1 / 16, 1 / 64, 1 / 256])
    def test_uniform_fraction(self, h):
        g = make_grid(1, h, (0, 1))
        mu = DiscreteMeasure(g, np.full(g.shape, h))
        assert abs(cube_mass(mu, CubeSpec((0.5,), 0.25)) - 0.5) <= h

    def test_strict_inclusion(self):
        g = make_grid(1, 1.0, (0, 4))
        mu = DiscreteMeasure(g, np.ones(4))
        # centers 0.5 and 1.5 lie at distance exactly 1 from 1.5 +- 1 edges
        assert cube_mass(mu, CubeSpec((1.5,), 1.0)) == 1.0

    @given(st.lists(st.floats(0, 3), min_size=20, max_size=20), st.floats(0.0, 2.0),
           st.floats(0.05, 1.0), st.floats(0.0, 1.0))
    def test_monotone_and_additive(self, m, c, r, extra):
        g = make_grid(1, 0.125, (0, 2.5))
        mu = DiscreteMeasure(g, np.array(m))
        small, big = CubeSpec((c,), r), CubeSpec((c,), r + extra)
        assert cube_mass(mu, small) <= cube_mass(mu, big) + 1e-12
        left, right = CubeSpec((c - r / 2,), r / 2), CubeSpec((c + r / 2,), r / 2)
        assert cube_mass(mu, left) + cube_mass(mu, right) <= cube_mass(mu, small) + 1e-12


class TestIntegration:
    def test_cube_integrals_match_average(self):
        g = make_grid(2, 0.25, (0, 2))
        rng = np.random.default_rng(3)
        v = rng.random(g.shape)
        ints, vol = cube_integrals(g, v, np.array([[0.9, 1.2]]), np.array([0.4]))
        assert ints[0] / vol[0] == pytest.approx(cube_average(Field(g, v), CubeSpec((0.9, 1.2), 0.4)))

    @pytest.mark.parametrize("t,h,m", [(1.0, 1.0, 0), (1.0001, 1.0, 1), (0.5, 0.25, 1), (3.0, 1.0, 2)])
    def test_strict_window(self, t, h, m):
        assert int(strict_window(t, h)) == m

    def test_window_sum_one_dimensional(self):
        v = np.arange(6.0)
        np.testing.assert_allclose(window_sum(v, 1), [1, 3, 6, 9, 12, 9])
        np.testing.assert_allclose(window_sum(v, -1), 0)

    @given(st.integers(1, 9), st.integers(1, 9), st.lists(st.integers(-1, 10), min_size=1, max_size=5))
    def test_layers_agree_with_single_sums(self, n1, n2, ms):
        rng = np.random.default_rng(n1 * 31 + n2)
        v = rng.random((n1, n2))
        ref = np.stack([window_sum(v, m) for m in ms])
        np.testing.assert_allclose(window_sum_layers(v, ms), ref, atol=1e-12)
        stack = rng.random((len(ms), n1, n2))
        ref = np.stack([window_sum(stack[k], m) for k, m in enumerate(ms)])
        np.testing.assert_allclose(window_sum_layers(stack, ms, stacked=True), ref, atol=1e-12)


class TestLogTimeGrid:
    def test_geometric(self):
        tg = LogTimeGrid(0.01, 1.0, 8)
        t = tg.nodes()
        np.testing.assert_allclose(np.diff(np.log(t)), np.log(t[1] / t[0]))
        assert tg.weights().sum() == pytest.approx(np.log(100))

    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)])
    def test_invalid(self, a, b):
        with pytest.raises(ValueError):
            LogTimeGrid(a, b)

    def test_power_integral(self):
        tg = LogTimeGrid(0.01, 1.0, 32)
        approx = np.sum(tg.nodes() ** 0.5 * tg.weights())
        assert approx == pytest.approx(2 * (1 - 0.1), rel=1e-3)


class TestSerialization:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_roundtrip(self, dim):
        g = make_grid(dim, 0.25, (-0.5, 0.5))
        v = np.random.default_rng(0).random(g.shape)
        f = Field(g, v)
        for back in (field_from_text(field_to_text(f)), field_from_json(field_to_json(f))):
            assert back.grid == g
            np.testing.assert_array_equal(back.values, v)

    def test_text_header(self):
        g = make_grid(2, 0.5, (0, 1))
        head = field_to_text(Field(g, np.zeros(g.shape))).splitlines()[0]
        assert head == "2 0.5 2,2 0.0,0.0"
        assert json.loads(field_to_json(Field(g, np.zeros(g.shape))))["shape"] == [2, 2]

    def test_bad_header(self):
        with pytest.raises(ValueError):
            field_from_text("1 0.5\n1.0\n")
