import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailslab.angular import AngularField, SphereGrid, sphere_average


def test_quadrature_weights_sum_to_4pi():
    for lmax in (2, 5, 8, 12):
        g = SphereGrid(lmax)
        assert abs(g.weights.sum() - 4 * math.pi) < 1e-12 * 4 * math.pi


def test_harmonics_orthonormal():
    g = SphereGrid(6)
    for (l1, m1) in [(0, 0), (1, 0), (1, 1), (2, -1), (3, 2)]:
        for (l2, m2) in [(0, 0), (1, 0), (2, -1), (4, -3)]:
            val = g.integrate(g.harmonic(l1, m1) * g.harmonic(l2, m2))
            expect = 1.0 if (l1, m1) == (l2, m2) else 0.0
            assert abs(val - expect) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_round_trip_band_limited(coeff_list):
    g = SphereGrid(8)
    coeffs = np.zeros(len(g.modes))
    # populate modes with ell <= 2 from the strategy
    for k, (ell, m) in enumerate(g.modes):
        if ell <= 2:
            coeffs[k] = coeff_list[(ell * ell + ell + m)]
    f = AngularField(g, g.synthesize(coeffs))
    back = f.coefficients()
    assert np.max(np.abs(back - coeffs)) < 1e-10


def test_round_trip_full_band():
    g = SphereGrid(8)
    rng = np.random.default_rng(7)
    coeffs = rng.standard_normal(len(g.modes))
    f = AngularField(g, g.synthesize(coeffs))
    assert np.max(np.abs(f.coefficients() - coeffs)) < 1e-10


def test_sphere_average_constant():
    f = AngularField.constant(3.25)
    assert abs(sphere_average(f) - 3.25) < 1e-13


def test_sphere_average_harmonic_is_zero():
    f = AngularField.from_harmonic(1, 0)
    assert abs(sphere_average(f)) < 1e-13


def test_sphere_average_of_laplacian_vanishes():
    # divergence-theorem identity used in the c0 computation
    g = SphereGrid(8)
    rng = np.random.default_rng(11)
    h = AngularField(g, g.synthesize(rng.standard_normal(len(g.modes))))
    assert abs(sphere_average(h.laplacian())) < 1e-12 * max(1.0, h.norm_inf())


def test_laplacian_eigenvalue_positive_convention():
    f = AngularField.from_harmonic(2, 1)
    lap = f.laplacian()
    assert np.allclose(lap.values, 6.0 * f.values, atol=1e-10)


def test_field_arithmetic_and_errors():
    g = SphereGrid(4)
    f = AngularField.constant(2.0, g)
    h = (f + f) * 0.5 - f
    assert h.norm_inf() < 1e-14
    with pytest.raises(ValueError):
        AngularField(g, np.zeros((3, 3)))
