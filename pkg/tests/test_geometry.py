import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from spherebilliards.errors import NotPositivelyCurved
from spherebilliards.geometry import (
    GeodesicState,
    JacobiState,
    Metric,
    first_conjugate_time,
    gauss_curvature,
    geodesic_distance,
    geodesic_step,
    jacobi_matrix,
    jacobi_transport,
    round_distance,
)
from spherebilliards.harmonics import HarmonicField

from conftest import HARMONICS


def sph(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


unit_vectors = st.tuples(st.floats(0.05, math.pi - 0.05), st.floats(0.0, 2 * math.pi)).map(lambda a: sph(*a))


@given(unit_vectors, unit_vectors, unit_vectors)
def test_round_distance_is_a_metric(p, q, r):
    assert round_distance(p, q) == pytest.approx(round_distance(q, p), abs=1e-14)
    assert round_distance(p, r) <= round_distance(p, q) + round_distance(q, r) + 1e-12
    assert 0.0 <= round_distance(p, q) <= math.pi


def test_round_distance_closed_form(round_metric):
    p, q = sph(0.3, 0.1), sph(1.2, 2.0)
    sol = geodesic_distance(round_metric, p, q)
    assert sol.length == pytest.approx(math.acos(p @ q), abs=1e-14)
    # end directions are unit tangents
    assert abs(sol.departure @ p) < 1e-14 and abs(np.linalg.norm(sol.arrival) - 1) < 1e-14


def _polygon_distance(metric, p, q, n=120):
    """Independent oracle: minimize the midpoint-rule g-length of an n-segment path."""
    a = np.cross(p, q)
    a /= np.linalg.norm(a)
    d0 = math.acos(np.clip(p @ q, -1, 1))
    ts = np.linspace(0, 1, n + 1)[1:-1]
    base = np.array([math.cos(t * d0) * p + math.sin(t * d0) * np.cross(a, p) for t in ts])

    def length(y):
        pts = base + y[:, None] * a
        pts = np.vstack([p, pts / np.linalg.norm(pts, axis=1)[:, None], q])
        mids = pts[:-1] + pts[1:]
        mids /= np.linalg.norm(mids, axis=1)[:, None]
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return float(np.sum(metric.conformal_factor(mids) * seg))

    res = minimize(length, np.zeros(n - 1), method="BFGS", options={"gtol": 1e-11, "maxiter": 5000})
    return res.fun


@pytest.mark.parametrize("pq", [((0.4, 0.2), (1.1, 1.3)), ((0.9, 3.0), (0.5, 4.2))])
def test_conformal_distance_matches_polygon_oracle(conformal_metric, pq):
    p, q = sph(*pq[0]), sph(*pq[1])
    d = geodesic_distance(conformal_metric, p, q).length
    # the polygon length is second order in 1/n; one Richardson step removes that term
    coarse, fine = _polygon_distance(conformal_metric, p, q, 60), _polygon_distance(conformal_metric, p, q, 120)
    assert d == pytest.approx((4 * fine - coarse) / 3, rel=1e-7)


def _fd_laplacian(field: HarmonicField, theta, phi, h=1e-4):
    f = lambda t, p: float(field.value(sph(t, p)))
    f0 = f(theta, phi)
    ftt = (f(theta + h, phi) - 2 * f0 + f(theta - h, phi)) / h**2
    ft = (f(theta + h, phi) - f(theta - h, phi)) / (2 * h)
    fpp = (f(theta, phi + h) - 2 * f0 + f(theta, phi - h)) / h**2
    return ftt + ft * math.cos(theta) / math.sin(theta) + fpp / math.sin(theta) ** 2


@pytest.mark.parametrize("angles", [(0.5, 0.3), (1.3, 2.2), (2.4, 5.0)])
def test_gauss_curvature_matches_fd_laplacian(conformal_metric, angles):
    x = sph(*angles)
    lap = _fd_laplacian(conformal_metric.phi, *angles)
    phi = float(conformal_metric.phi.value(x))
    expected = math.exp(-2 * phi) * (1 - lap)
    assert float(gauss_curvature(conformal_metric, x)) == pytest.approx(expected, abs=1e-5)


def test_harmonics_are_orthonormal():
    # Lebedev-free check: Gauss-Legendre in cos(theta), trapezoid in phi
    xg, wg = np.polynomial.legendre.leggauss(24)
    phis = np.linspace(0, 2 * math.pi, 48, endpoint=False)
    pts = np.array([[math.sqrt(1 - z * z) * math.cos(p), math.sqrt(1 - z * z) * math.sin(p), z] for z in xg for p in phis])
    w = np.repeat(wg, len(phis)) * (2 * math.pi / len(phis))
    idx = [(l, m) for l in range(4) for m in range(-l, l + 1)]
    vals = np.array([HarmonicField(((l, m, 1.0),)).value(pts) for l, m in idx])
    gram = (vals * w) @ vals.T
    assert np.allclose(gram, np.eye(len(idx)), atol=1e-12)


def test_negative_curvature_rejected():
    with pytest.raises(NotPositivelyCurved):
        Metric.conformal([(2, 0, 1.5)])


def test_round_geodesic_and_conjugate_point(round_metric):
    st0 = GeodesicState.make(round_metric, [0, 0, 1], [1, 0, 0])
    end = geodesic_step(round_metric, st0, math.pi / 2)
    assert np.allclose(end.point, [1, 0, 0], atol=1e-15)
    assert first_conjugate_time(round_metric, st0, 4.0) == pytest.approx(math.pi, abs=1e-14)
    J = jacobi_transport(round_metric, st0, JacobiState(1.0, 0.5), 1.0)
    assert J.value == pytest.approx(math.cos(1) + 0.5 * math.sin(1), abs=1e-14)


def test_conformal_geodesic_is_unit_speed_and_reversible(conformal_metric):
    st0 = GeodesicState.make(conformal_metric, sph(0.7, 0.4), [0.3, 1.0, -0.2])
    end = geodesic_step(conformal_metric, st0, 1.3)
    assert abs(np.linalg.norm(end.point) - 1) < 1e-12
    assert conformal_metric.norm(end.point, end.direction) == pytest.approx(1.0, abs=1e-10)
    back = geodesic_step(conformal_metric, GeodesicState(end.point, -end.direction), 1.3)
    assert np.allclose(back.point, st0.point, atol=1e-8)


def test_conformal_jacobi_wronskian_and_distance_consistency(conformal_metric):
    st0 = GeodesicState.make(conformal_metric, sph(1.0, 1.0), [0.0, 0.3, 1.0])
    end, Phi = jacobi_matrix(conformal_metric, st0, 1.1)
    assert np.linalg.det(Phi) == pytest.approx(1.0, abs=1e-8)
    # the geodesic segment is minimizing, so distance equals the flown length
    assert geodesic_distance(conformal_metric, st0.point, end.point).length == pytest.approx(1.1, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 2 * math.pi), st.floats(0.3, 2.5))
def test_round_jacobi_is_rotation(ang, t):
    m = Metric.round()
    st0 = GeodesicState.make(m, [0, 0, 1], [math.cos(ang), math.sin(ang), 0])
    _, Phi = jacobi_matrix(m, st0, t)
    assert np.allclose(Phi, [[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])


def test_harmonic_list_used_in_fixtures_is_positively_curved():
    m = Metric.conformal(HARMONICS)
    assert m.curvature_floor > 0
