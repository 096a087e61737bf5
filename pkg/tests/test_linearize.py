import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherebilliards.billiard import PhasePoint, billiard_map, map_point
from spherebilliards.geometry import GeodesicState, JacobiState, Metric, jacobi_transport
from spherebilliards.linearize import (
    Wavefront,
    arrival_matrix,
    backward_focusing_time,
    curvature_from_slope,
    departure_matrix,
    focusing_time,
    mirror_matrix,
    reflect_wavefront,
    round_sphere_front_evolution,
    slope_from_curvature,
    step_tangent,
    tangent_at,
)
from spherebilliards.table import curvature_at


def _fd_tangent(table, x, h=1e-6):
    L = table.length
    cols = []
    for d in ((h, 0.0), (0.0, h)):
        a = map_point(table, PhasePoint(x.s + d[0], x.theta + d[1]))
        b = map_point(table, PhasePoint(x.s - d[0], x.theta - d[1]))
        ds = (a.s - b.s + L / 2) % L - L / 2
        cols.append([ds / (2 * h), (a.theta - b.theta) / (2 * h)])
    return np.array(cols).T


@pytest.mark.parametrize("name", ["circle", "strong", "conformal"])
def test_tangent_map_matches_finite_differences(name, request):
    t = request.getfixturevalue(name)
    for x in (PhasePoint(0.3, 1.1), PhasePoint(2.0, 2.2)):
        _, D = tangent_at(t, x)
        assert np.allclose(D.entries, _fd_tangent(t, x), atol=5e-6)


@pytest.mark.parametrize("name", ["strong", "conformal"])
def test_symplectic_determinant(name, request):
    t = request.getfixturevalue(name)
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = PhasePoint(float(rng.uniform(0, t.length)), float(rng.uniform(0.2, 2.9)))
        y, D = tangent_at(t, x)
        assert math.sin(y.theta) * D.det == pytest.approx(math.sin(x.theta), abs=1e-8)


def test_mirror_formula_ratio_form(strong):
    s1, th1 = 1.3, 0.9
    k = curvature_at(strong, s1)
    w = Wavefront(JacobiState(0.8, -0.3), th1, s1, k)
    out = reflect_wavefront(strong, w, s1, th1)
    assert out.curvature == pytest.approx(w.curvature - 2 * k / math.sin(th1), abs=1e-14)


@settings(max_examples=50)
@given(st.floats(-10, 10), st.floats(0.05, 3.09), st.floats(0.1, 3.0))
def test_slope_relation_roundtrip(m, theta, kappa):
    B = curvature_from_slope(m, theta, kappa)
    assert slope_from_curvature(B, theta, kappa) == pytest.approx(m, abs=1e-9)


def test_slope_of_image_curve_matches_fd(strong):
    """A curve in phase space with slope m maps to a curve whose slope is the reflected front's slope."""
    x = PhasePoint(0.5, 1.2)
    v = np.array([1.0, 0.37])
    y, D = tangent_at(strong, x)
    w = D.entries @ v
    m_img = w[1] / w[0]
    h = 1e-6
    a = map_point(strong, PhasePoint(x.s + h * v[0], x.theta + h * v[1]))
    b = map_point(strong, PhasePoint(x.s - h * v[0], x.theta - h * v[1]))
    assert m_img == pytest.approx((a.theta - b.theta) / (a.s - b.s), rel=1e-5)
    front = Wavefront.from_phase_vector(strong, y, w)
    assert front.slope == pytest.approx(m_img, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-20, 20))
def test_round_focusing_identities(J0, B0):
    m = Metric.round()
    w = Wavefront(JacobiState(J0, B0 * J0), math.pi / 2)
    f = focusing_time(m, w)
    fh = backward_focusing_time(m, w)
    assert f + fh == pytest.approx(math.pi, abs=1e-12)
    assert B0 == pytest.approx(-math.cos(f) / math.sin(f), abs=1e-9 * max(1, B0**2))


def test_round_front_evolution():
    a0, t = 0.4, 0.9
    m = Metric.round()
    st0 = GeodesicState.make(m, [0, 0, 1], [1, 0, 0])
    J = jacobi_transport(m, st0, JacobiState(math.sin(a0), math.cos(a0)), t)
    assert J.derivative / J.value == pytest.approx(round_sphere_front_evolution(a0, t), abs=1e-13)


def test_focusing_on_conformal_metric_needs_base(conformal_metric):
    w = Wavefront(JacobiState(1.0, -1.0), 1.0)
    with pytest.raises(ValueError):
        focusing_time(conformal_metric, w)
    base = GeodesicState.make(conformal_metric, [0, 0, 1], [1, 0, 0])
    f = focusing_time(conformal_metric, Wavefront(JacobiState(1.0, -1.0), 1.0, base=base))
    # curvature is near 1, so the focusing time is near the round value pi/4
    assert 0.6 < f < 1.0


def test_step_tangent_uses_chord_record(strong):
    x = PhasePoint(1.7, 0.8)
    y, rec = billiard_map(strong, x)
    assert np.allclose(step_tangent(strong, x, rec).entries, tangent_at(strong, x)[1].entries)


def test_tangent_map_factorization(conformal):
    x = PhasePoint(0.9, 1.4)
    y, rec = billiard_map(conformal, x)
    k0, k1 = curvature_at(conformal, x.s), curvature_at(conformal, y.s)
    # arrival reading already contains the mirror: it is departure^-1 composed with the reflection
    A = arrival_matrix(y.theta, k1)
    assert np.allclose(A, np.linalg.inv(departure_matrix(y.theta, k1)) @ mirror_matrix(y.theta, k1))
    D = A @ rec.jacobi @ departure_matrix(x.theta, k0)
    assert np.allclose(D, step_tangent(conformal, x, rec).entries, atol=1e-12)
    assert np.linalg.det(D) == pytest.approx(math.sin(x.theta) / math.sin(y.theta), abs=1e-8)
