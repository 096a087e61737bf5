import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from spherebilliards.billiard import (
    PhasePoint,
    billiard_map,
    chord_between,
    generating_partials,
    generating_value,
    inverse_map,
    invariant_density,
    iterate,
    map_point,
    twist_check,
)
from spherebilliards.errors import GrazingHit
from spherebilliards.geometry import Metric, geodesic_distance
from spherebilliards.table import build_table

from conftest import ALPHA, POLE, circle_chord


def _circle_advance(theta, alpha=ALPHA):
    """Arclength advance on a circle of geodesic radius alpha: tan(dpsi/2) = tan(theta) / cos(alpha)."""
    dpsi = 2 * math.atan2(math.sin(theta), math.cos(theta) * math.cos(alpha))
    return math.sin(alpha) * dpsi


_CIRCLE: dict = {}


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 4.0), st.floats(0.05, math.pi - 0.05))
def test_circle_map_matches_spherical_trig(s, theta):
    t = _CIRCLE.setdefault("t", build_table(Metric.round(), POLE, [], radius=ALPHA))
    y, rec = billiard_map(t, PhasePoint(s % t.length, theta))
    assert y.theta == pytest.approx(theta, abs=1e-12)
    assert rec.flight_length == pytest.approx(circle_chord(theta), abs=1e-12)
    assert rec.advance == pytest.approx(_circle_advance(theta), abs=1e-11)



def test_diameter_chord(circle):
    y, rec = billiard_map(circle, PhasePoint(0.3, math.pi / 2))
    assert y.s == pytest.approx(0.3 + circle.length / 2, abs=1e-12)
    assert rec.flight_length == pytest.approx(2 * ALPHA, abs=1e-13)


def test_theta_conserved_on_circle(circle):
    seg = iterate(circle, PhasePoint(0.1, 1.1), 1000)
    assert seg.complete
    assert max(abs(p.theta - 1.1) for p in seg.points) < 1e-8


@pytest.mark.parametrize("name", ["strong", "conformal"])
def test_inverse_and_reversibility(name, request):
    t = request.getfixturevalue(name)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = PhasePoint(float(rng.uniform(0, t.length)), float(rng.uniform(0.2, 2.9)))
        y = map_point(t, x)
        z = inverse_map(t, y)
        assert abs((z.s - x.s + t.length / 2) % t.length - t.length / 2) < 1e-8
        assert z.theta == pytest.approx(x.theta, abs=1e-8)


@pytest.mark.parametrize("name", ["circle", "strong", "conformal"])
def test_generating_partials_match_finite_differences(name, request):
    t = request.getfixturevalue(name)
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(8):
        s1 = float(rng.uniform(0, t.length))
        s2 = s1 + float(rng.uniform(0.15, 0.85)) * t.length
        d1, d2 = generating_partials(t, s1, s2)
        f1 = (generating_value(t, s1 + h, s2) - generating_value(t, s1 - h, s2)) / (2 * h)
        f2 = (generating_value(t, s1, s2 + h) - generating_value(t, s1, s2 - h)) / (2 * h)
        assert d1 == pytest.approx(f1, abs=1e-5)
        assert d2 == pytest.approx(f2, abs=1e-5)


def test_chord_angles_agree_with_map(strong):
    x = PhasePoint(0.4, 1.0)
    y, rec = billiard_map(strong, x)
    c = chord_between(strong, x.s, y.s)
    assert c.theta_out == pytest.approx(x.theta, abs=1e-10)
    assert c.theta_in == pytest.approx(y.theta, abs=1e-10)
    assert c.length == pytest.approx(rec.flight_length, abs=1e-10)


def test_conformal_flight_is_minimizing(conformal):
    x = PhasePoint(1.0, 1.2)
    y, rec = billiard_map(conformal, x)
    d = geodesic_distance(conformal.metric, conformal.point(x.s), conformal.point(y.s)).length
    assert d == pytest.approx(rec.flight_length, abs=1e-9)


@pytest.mark.parametrize("name", ["circle", "strong", "conformal"])
def test_twist_monotone(name, request):
    t = request.getfixturevalue(name)
    rep = twist_check(t, 0.7, samples=24)
    assert rep.monotone and rep.min_twist > 0
    inv = twist_check(t, 0.7, samples=24, inverse=True)
    assert inv.monotone and inv.min_twist < 0


def test_twist_derivative_matches_fd(strong):
    s, th, h = 0.9, 1.3, 1e-6
    _, rec = billiard_map(strong, PhasePoint(s, th))
    _, a = billiard_map(strong, PhasePoint(s, th + h))
    _, b = billiard_map(strong, PhasePoint(s, th - h))
    fd = (a.advance - b.advance) / (2 * h)
    y = rec.end
    assert rec.jacobi[0, 1] / math.sin(y.theta) == pytest.approx(fd, rel=1e-6)


def test_grazing_cutoff(strong):
    with pytest.raises(GrazingHit):
        billiard_map(strong, PhasePoint(0.3, 1e-3), theta_min=0.01)
    seg = iterate(strong, PhasePoint(0.3, 1e-3), 5, theta_min=0.01)
    assert not seg.complete and "GrazingHit" in seg.error


def test_phase_point_domain():
    with pytest.raises(ValueError):
        PhasePoint(0.0, 0.0)
    assert PhasePoint(1.0, 0.4).reversed().theta == pytest.approx(math.pi - 0.4)


def test_invariant_measure_monte_carlo(strong):
    """Pushing mu-distributed samples forward leaves cell masses unchanged."""
    rng = np.random.default_rng(5)
    n = 4000
    L = strong.length
    s = rng.uniform(0, L, n)
    # inverse-CDF sampling of sin(theta)/2 on (0, pi)
    th = np.arccos(1 - 2 * rng.uniform(0, 1, n))
    keep = (th > 0.02) & (th < math.pi - 0.02)
    s, th = s[keep], th[keep]
    img = np.array([[p.s, p.theta] for p in (map_point(strong, PhasePoint(float(a), float(b))) for a, b in zip(s, th))])
    bins = (np.linspace(0, L, 5), np.linspace(0, math.pi, 5))
    before, _, _ = np.histogram2d(s, th, bins=bins)
    after, _, _ = np.histogram2d(img[:, 0], img[:, 1], bins=bins)
    # exact cell masses from the density
    e = np.outer(np.diff(bins[0]), -np.diff(np.cos(bins[1])))
    e *= len(s) / e.sum()
    chi_before = np.sum((before - e) ** 2 / e)
    chi_after = np.sum((after - e) ** 2 / e)
    # 15 degrees of freedom; 99.9% quantile is about 37.7
    assert chi_before < 37.7 and chi_after < 37.7


def test_invariant_density_normalized(circle):
    th = np.linspace(0, math.pi, 20001)
    mass = trapezoid(invariant_density(circle, th), th) * circle.length
    assert mass == pytest.approx(1.0, abs=1e-8)
