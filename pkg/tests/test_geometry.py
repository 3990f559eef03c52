import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from invdyn.geometry import (
    TWO_PI,
    DomainError,
    MetricKind,
    MetricTag,
    jacobi_metric_factor,
    normalize_sphere,
    sphere_geodesic_field,
    torus_displacement,
    torus_distance,
    wrap_to_fundamental_domain,
)

coords = arrays(np.float64, 2, elements=st.floats(-1e6, 1e6, allow_nan=False))


@given(coords)
def test_wrap_lands_in_domain_and_is_idempotent(q):
    w = wrap_to_fundamental_domain(q)
    assert np.all((w >= 0.0) & (w < TWO_PI))
    np.testing.assert_array_equal(wrap_to_fundamental_domain(w), w)


@given(coords, st.integers(-50, 50))
def test_wrap_ignores_whole_turns(q, m):
    a = wrap_to_fundamental_domain(q)
    b = wrap_to_fundamental_domain(q + m * TWO_PI)
    assert np.all(torus_distance(a, b) < 1e-6)


def test_wrap_examples():
    np.testing.assert_allclose(wrap_to_fundamental_domain([7.0, -0.5]), [7.0 - TWO_PI, TWO_PI - 0.5])
    np.testing.assert_array_equal(wrap_to_fundamental_domain([TWO_PI, 0.0]), [0.0, 0.0])


def test_wrap_rejects_non_finite():
    with pytest.raises(DomainError):
        wrap_to_fundamental_domain([np.nan, 0.0])
    with pytest.raises(DomainError):
        wrap_to_fundamental_domain([np.inf, 0.0])


@given(coords, coords)
def test_displacement_antisymmetric_and_short(a, b):
    d = torus_displacement(a, b)
    assert np.all((d >= -np.pi) & (d < np.pi))
    back = torus_displacement(b, a)
    # antisymmetric except on the cut where both ends map to -pi
    on_cut = np.isclose(np.abs(d), np.pi)
    np.testing.assert_allclose(d[~on_cut], -back[~on_cut], atol=1e-6)


def test_displacement_crosses_the_seam():
    np.testing.assert_allclose(torus_displacement([6.2, 0.1], [0.1, 6.2]),
                               [0.1 + TWO_PI - 6.2, 6.2 - 0.1 - TWO_PI])


def test_jacobi_factor():
    assert jacobi_metric_factor(2.0, 0.5) == 1.5
    assert jacobi_metric_factor(1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        jacobi_metric_factor(0.5, 1.0)


def test_sphere_field_is_tangent_and_centripetal():
    x = normalize_sphere([1.0, 2.0, 2.0])
    v = np.cross(x, [0.0, 0.0, 1.0])
    dx, dv = sphere_geodesic_field(x, v)
    np.testing.assert_array_equal(dx, v)
    np.testing.assert_allclose(dv, -np.dot(v, v) * x)
    with pytest.raises(DomainError):
        sphere_geodesic_field(x, x)


def test_metric_tag():
    assert MetricTag(MetricKind.FLAT_TORUS_2).rho is None
    with pytest.raises((ValueError, TypeError)):
        MetricTag(MetricKind.FLAT_TORUS_2, rho=object())


@pytest.mark.parametrize("raw,expected", [
    ((0.0, 0.0), (0.0, 0.0)),
    ((TWO_PI, -np.pi), (0.0, np.pi)),
    ((7.0, 7.0), (7.0 - TWO_PI, 7.0 - TWO_PI)),
])
def test_wrap_table(raw, expected):
    np.testing.assert_allclose(wrap_to_fundamental_domain(raw), expected, atol=1e-15)


def _brute_displacement(a, b):
    # minimum-norm difference over the 9 nearest lattice translates
    shifts = [np.array([i, j]) * TWO_PI for i in (-1, 0, 1) for j in (-1, 0, 1)]
    diffs = [np.asarray(b) - np.asarray(a) + s for s in shifts]
    return min(diffs, key=np.linalg.norm)


@pytest.mark.parametrize("a,b,expected", [
    ((0.5, 0.5), (0.5, 0.5), (0.0, 0.0)),
    ((0.0, 0.0), (TWO_PI - 0.1, 0.0), (-0.1, 0.0)),
    ((1.0, 2.0), (4.0, 6.0), (3.0, 4.0 - TWO_PI)),
])
def test_displacement_table(a, b, expected):
    np.testing.assert_allclose(torus_displacement(a, b), expected, atol=1e-14)
    np.testing.assert_allclose(torus_displacement(a, b), _brute_displacement(a, b), atol=1e-14)


def test_jacobi_table():
    assert jacobi_metric_factor(1.0, 0.0) == 1.0
    assert jacobi_metric_factor(2.0, -0.5) == 2.5


def test_sphere_field_table():
    _, a = sphere_geodesic_field([1.0, 0, 0], [0, 1.0, 0])
    np.testing.assert_array_equal(a, [-1.0, 0, 0])
    _, a = sphere_geodesic_field([0, 0, 1.0], [0, 2.0, 0])
    np.testing.assert_array_equal(a, [0, 0, -4.0])
    _, a = sphere_geodesic_field([0, 0, 1.0], [0, 0, 0])
    np.testing.assert_array_equal(a, [0, 0, 0])
