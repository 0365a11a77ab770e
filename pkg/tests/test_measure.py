import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semilt.measure import (
    DensitySpec,
    SignedMeasure,
    F_nu,
    F_nu_inverse,
    drift_to_measure,
    f_nu,
    parse_measure,
    scale_function,
)

HALF = SignedMeasure.dirac(0.5)


class TestConstruction:
    @pytest.mark.parametrize("w", [1.0, -1.0, 1.5])
    def test_rejects_large_atoms(self, w):
        with pytest.raises(ValueError):
            SignedMeasure.dirac(w)

    def test_rejects_unsorted_atoms(self):
        with pytest.raises(ValueError):
            SignedMeasure(((1.0, 0.1), (0.0, 0.1)))

    def test_rejects_unbounded_support(self):
        with pytest.raises(ValueError):
            DensitySpec.constant(1.0, 0.0, math.inf)

    def test_zero_flags(self):
        assert SignedMeasure().is_zero
        assert not HALF.is_zero and HALF.is_pure_atomic


class TestParse:
    @pytest.mark.parametrize("text", ["zero", "atoms=0:0.5", "atoms=-1:0.25,2:-0.5",
                                      "density=constant(0.3,0,1)",
                                      "atoms=0:0.2;density=table(-1:0,0:1,1:0)"])
    def test_literal_round_trip(self, text):
        m = parse_measure(text)
        again = parse_measure(m.to_literal())
        assert again.to_literal() == m.to_literal()

    def test_atoms_are_sorted(self):
        assert parse_measure("atoms=2:0.1,-1:0.2").atoms == ((-1.0, 0.2), (2.0, 0.1))

    @pytest.mark.parametrize("text", ["atoms=0", "atoms=0:1", "density=poly(1)", "mass=3",
                                      "density=constant(1,0)"])
    def test_bad_literals(self, text):
        with pytest.raises(ValueError):
            parse_measure(text)


class TestScaleDensity:
    def test_zero_measure(self):
        y = np.linspace(-5, 5, 11)
        assert np.array_equal(f_nu(SignedMeasure(), y), np.ones(11))
        assert np.array_equal(F_nu(SignedMeasure(), y), y)

    def test_single_atom(self):
        assert f_nu(HALF, -0.3) == 1.0
        assert f_nu(HALF, 0.0) == pytest.approx(1 / 3, abs=1e-15)
        assert f_nu(HALF, 2.0) == pytest.approx(1 / 3, abs=1e-15)

    @pytest.mark.parametrize("c", [0.4, -0.7])
    def test_constant_density(self, c):
        nu = SignedMeasure((), DensitySpec.constant(c, 0.0, 1.0))
        y = np.array([-1.0, 0.25, 0.5, 1.0, 3.0])
        expect = np.where(y < 0, 1.0, np.exp(-2 * c * np.minimum(y, 1.0)))
        assert np.allclose(f_nu(nu, y), expect, rtol=1e-12)

    def test_negative_side_convention(self):
        nu = SignedMeasure((), DensitySpec.constant(0.5, -1.0, 1.0))
        # nu^c(0, y] = -nu^c(y, 0] = 0.5 y for y < 0
        assert f_nu(nu, -0.5) == pytest.approx(math.exp(0.5), rel=1e-12)

    def test_jump_ratio(self):
        nu = parse_measure("atoms=-1:0.3,2:-0.6;density=constant(0.2,-3,3)")
        sf = scale_function(nu)
        for (a, w), r in zip(nu.atoms, nu.ratios):
            left, right = sf.f(a - 1e-9), sf.f(a)
            assert right / left == pytest.approx((1 - w) / (1 + w), rel=1e-6)

    def test_bounds(self):
        nu = parse_measure("atoms=-1:0.3,2:-0.6;density=table(-2:0,0:1,2:-1)")
        m, M = nu.scale_bounds()
        f = f_nu(nu, np.linspace(-10, 10, 4001))
        assert 0 < m <= f.min() and f.max() <= M


class TestScaleFunction:
    def test_skew_case(self):
        x = np.array([-2.0, -0.5, 0.0, 0.75, 3.0])
        assert np.allclose(F_nu(HALF, x), np.where(x < 0, x, x / 3), rtol=0, atol=1e-15)
        v = np.array([-2.0, 0.25, 1.0])
        assert np.allclose(F_nu_inverse(HALF, v), np.where(v < 0, v, 3 * v), rtol=0, atol=1e-14)

    @pytest.mark.parametrize("beta", [-0.5, 0.2, 0.9])
    def test_slope_ratio(self, beta):
        nu = SignedMeasure.dirac(beta)
        right = F_nu(nu, 1.0)
        left = -F_nu(nu, -1.0)
        assert right / left == pytest.approx((1 - beta) / (1 + beta), rel=1e-12)

    def test_origin(self):
        nu = parse_measure("atoms=0.5:0.3;density=constant(0.2,-1,2)")
        assert F_nu(nu, 0.0) == 0.0

    @pytest.mark.parametrize("text", ["atoms=0:0.5", "atoms=-1:0.3,2:-0.6;density=constant(0.2,-3,3)",
                                      "density=table(-2:0,0:1,2:-1)"])
    def test_round_trip_1000(self, text):
        nu = parse_measure(text)
        x = np.random.default_rng(7).uniform(-10, 10, 1000)
        back = F_nu_inverse(nu, F_nu(nu, x))
        assert np.all(np.abs(back - x) <= 1e-10 * (1 + np.abs(x)))
        v = F_nu(nu, x)
        assert np.all(np.abs(F_nu(nu, back) - v) <= 1e-12 * np.maximum(1, np.abs(v)))

    def test_lipschitz_and_monotone(self):
        nu = parse_measure("atoms=-1:0.3,2:-0.6;density=constant(0.2,-3,3)")
        m, M = nu.scale_bounds()
        x = np.linspace(-8, 8, 3001)
        F = F_nu(nu, x)
        slopes = np.diff(F) / np.diff(x)
        assert np.all(slopes > 0)
        assert slopes.max() <= M * (1 + 1e-9)
        assert slopes.min() >= m * (1 - 1e-9)

    def test_density_matches_quadrature(self):
        nu = SignedMeasure((), DensitySpec.constant(0.4, 0.0, 1.0))
        # int_0^x exp(-0.8 y) dy, then slope exp(-0.8) beyond 1
        x = np.array([0.5, 1.0, 2.0])
        exact = np.where(x <= 1, (1 - np.exp(-0.8 * x)) / 0.8,
                         (1 - math.exp(-0.8)) / 0.8 + math.exp(-0.8) * (x - 1))
        assert np.allclose(F_nu(nu, x), exact, rtol=1e-10)

    def test_inverse_independent_of_batch(self):
        nu = parse_measure("atoms=-1:0.3,2:-0.6;density=constant(0.2,-3,3)")
        v = F_nu(nu, np.random.default_rng(3).uniform(-5, 5, 257))
        whole = F_nu_inverse(nu, v)
        one_by_one = np.array([F_nu_inverse(nu, t) for t in v])
        assert np.array_equal(whole, one_by_one)

    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-0.95, 0.95)), min_size=1, max_size=4,
                    unique_by=lambda t: round(t[0], 3)),
           st.floats(-10, 10))
    def test_property_round_trip(self, atoms, x):
        atoms = sorted((round(a, 3), w) for a, w in atoms)
        nu = SignedMeasure(tuple(atoms))
        back = F_nu_inverse(nu, F_nu(nu, x))
        assert abs(back - x) <= 1e-10 * (1 + abs(x))


class TestDriftToMeasure:
    def test_zero_drift(self):
        assert drift_to_measure(lambda x: 1 + x * 0, lambda x: 0 * x, (-3, 3)).is_zero

    def test_constant(self):
        nu = drift_to_measure(lambda x: np.ones_like(x), lambda x: 0.7 * np.ones_like(x), (-2, 2))
        assert nu.density.family == "constant" and nu.density.value == pytest.approx(0.7)

    def test_hand_integral(self):
        nu = drift_to_measure(lambda x: 1 + np.abs(x), lambda x: np.ones_like(x), (-3, 3))
        # 2 * int_0^3 (1+x)^-2 dx = 2 * (1 - 1/4)
        assert nu.density.integral(-3, 3) == pytest.approx(1.5, abs=1e-9)
        assert nu.density(np.array([1.0]))[0] == pytest.approx(0.25)

    def test_masked_on_sigma_zeros(self):
        nu = drift_to_measure(lambda x: np.where(np.abs(x) < 0.5, 0.0, 1.0),
                              lambda x: np.ones_like(x), (-2, 2))
        assert nu.density(np.array([0.0]))[0] == 0.0
        assert nu.density.integral(-2, 2) == pytest.approx(3.0, abs=1e-6)

    def test_non_integrable(self):
        with pytest.raises(ValueError):
            drift_to_measure(lambda x: np.sqrt(np.abs(x)) * 0 + np.abs(x), lambda x: np.ones_like(x),
                             (-1, 1), zero_atol=-1.0)

    def test_box_must_be_finite(self):
        with pytest.raises(ValueError):
            drift_to_measure(np.ones_like, np.ones_like, (0, math.inf))
