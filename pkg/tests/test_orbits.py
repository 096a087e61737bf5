import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherebilliards.billiard import PhasePoint
from spherebilliards.errors import DefectNonzero, NotElliptic, OrderViolation, SupportOverlap
from spherebilliards.orbits import (
    ELLIPTIC,
    HYPERBOLIC,
    PARABOLIC,
    Configuration,
    PeriodicOrbit,
    action,
    action_gradient,
    action_hessian,
    central_annulus_audit,
    classify,
    continued_fraction,
    defect,
    find_birkhoff,
    mackay_meiss_trace,
    projective_rotation_number,
    resonance_flag,
    residual_order,
    rotation_tune,
    shared_reflection_check,
    trace_response,
)


def test_minimizer_is_hyperbolic_with_positive_hessian(strong, strong_min12):
    o = strong_min12
    assert o.grad_residual < 1e-9
    assert o.config.ordered(strong.length)
    H = action_hessian(strong, o.config)
    assert np.linalg.eigvalsh(0.5 * (H + H.T)).min() > 0
    assert o.trace > 2 and o.classification == HYPERBOLIC


def test_minimax_has_larger_action(strong, strong_min12):
    mm = find_birkhoff(strong, 1, 2, kind="minimax")
    assert mm.grad_residual < 1e-9
    assert action(strong, mm.config) > action(strong, strong_min12.config)
    H = action_hessian(strong, mm.config)
    assert np.sum(np.linalg.eigvalsh(0.5 * (H + H.T)) < 0) == 1


def test_action_gradient_matches_fd(strong):
    cfg = Configuration((0.1, 1.5, 2.9), 1, 3)
    g = action_gradient(strong, cfg)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (action(strong, cfg.with_points(cfg.array() + e)) - action(strong, cfg.with_points(cfg.array() - e))) / (2 * h)
        assert g[k] == pytest.approx(fd, abs=1e-7)


def test_hessian_is_cyclic_tridiagonal(strong):
    cfg = Configuration((0.1, 0.9, 1.8, 2.6, 3.5), 1, 5)
    H = action_hessian(strong, cfg)
    for i in range(5):
        for j in range(5):
            if min(abs(i - j), 5 - abs(i - j)) > 1:
                assert H[i, j] == 0.0
    assert np.allclose(H, H.T, atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 4))
def test_action_invariant_under_relabeling(shift):
    from conftest import ALPHA, POLE, STRONG
    from spherebilliards.geometry import Metric
    from spherebilliards.table import build_table

    t = _T.setdefault("t", build_table(Metric.round(), POLE, STRONG, radius=ALPHA))
    cfg = Configuration((0.1, 0.9, 1.8, 2.6, 3.5), 1, 5)
    assert action(t, cfg.relabeled(shift, t.length)) == pytest.approx(action(t, cfg), abs=1e-12)


_T: dict = {}


@pytest.mark.parametrize("p,q", [(1, 2), (1, 3), (2, 5)])
def test_mackay_meiss_agrees_with_monodromy(strong, p, q):
    o = find_birkhoff(strong, p, q)
    tmm = mackay_meiss_trace(strong, o.config)
    assert tmm == pytest.approx(o.trace, rel=1e-6)


def test_circle_period_two_is_degenerate(circle):
    o = find_birkhoff(circle, 1, 2, seed=Configuration.regular(circle, 1, 2, 0.37))
    assert o.trace == pytest.approx(2.0, abs=1e-5)
    assert o.classification == PARABOLIC and o.degenerate


def test_pentagon_and_pentagram_share_points(circle):
    a = find_birkhoff(circle, 1, 5)
    b = find_birkhoff(circle, 2, 5)
    rep = shared_reflection_check(a, b, 1e-7, circle.length)
    assert rep.count == 5


def _fake_orbit(s, theta, symmetric):
    pts = [PhasePoint(v, t) for v, t in zip(s, theta)]
    return PeriodicOrbit(Configuration(tuple(s), 1, len(s)), pts, 0.0, ELLIPTIC, False, 0.0, np.eye(2), symmetric, 0)


def test_defect_counts():
    L = 10.0
    assert defect(_fake_orbit([0.0, 3.0, 6.0], [1.0] * 3, False), 1e-6, L) == 0
    assert defect(_fake_orbit([0.0, 3.0, 0.0, 6.0], [1.0, 1.2, 2.0, 0.5], False), 1e-6, L) == 1
    # symmetric orbit of period 4 visits three distinct points: 4/2 + 1 - 3 = 0
    assert defect(_fake_orbit([0.0, 3.0, 6.0, 3.0], [math.pi / 2, 1.0, math.pi / 2, 2.1], True), 1e-6, L) == 0


def test_classify_dead_zone():
    assert classify(2.0 + 1e-8) == (PARABOLIC, True)
    assert classify(-2.0 - 1e-8) == (PARABOLIC, False)
    assert classify(2.5)[0] == HYPERBOLIC
    assert classify(0.3)[0] == ELLIPTIC


def test_elliptic_rotation_number(mild_minimax13):
    o = mild_minimax13
    assert o.classification == ELLIPTIC
    assert math.cos(2 * math.pi * o.rotation_number) == pytest.approx(o.trace / 2, abs=1e-12)
    rho_proj = projective_rotation_number(o.monodromy, iterations=200_000)
    assert rho_proj == pytest.approx(o.rotation_number, abs=1e-4)


def test_rotation_number_requires_elliptic(strong_min12):
    from spherebilliards.orbits import rotation_number

    with pytest.raises(NotElliptic):
        rotation_number(strong_min12)


def test_resonance_flag():
    golden = (math.sqrt(5) - 1) / 2
    assert not resonance_flag(golden).flagged
    rep = resonance_flag(1 / 3 + 1e-12)
    assert rep.flagged and rep.resonance == (1, 3)
    assert continued_fraction(0.5) == [0, 2]
    assert continued_fraction(golden)[:8] == [0] + [1] * 7


def test_central_annulus_audit(strong):
    for p, q in [(1, 2), (1, 3), (2, 5)]:
        a = central_annulus_audit(strong, find_birkhoff(strong, p, q), samples=200)
        assert a.passed
        assert a.delta_n == pytest.approx(strong.total_curvature / (2 * q))


def test_trace_response_two_b_law(mild, mild_minimax13):
    r = trace_response(mild, mild_minimax13, 1e-3)
    assert r.measured_slope == pytest.approx(2 * r.b, rel=1e-3)
    S = np.array([[1.0, 0.0], [1e-3, 1.0]])
    assert np.allclose(r.monodromy_eps, S @ r.monodromy @ S, atol=1e-9)


def test_residual_orders(mild, mild_minimax13):
    rep = residual_order(mild, mild_minimax13)
    # the one-sided shear relation is first order; the two-sided one is exact up to round-off
    assert rep["order"] == pytest.approx(1.0, abs=0.05)
    assert max(rep["two_sided_residual"]) < 1e-9


def test_trace_response_preconditions(strong, strong_min12):
    with pytest.raises(SupportOverlap):
        trace_response(strong, strong_min12, 1e-3, width=0.99 * strong.length / 4 * 4)
    fake = _fake_orbit([0.0, 1.0, 0.0, 2.0], [1.0, 1.2, 2.0, 0.5], False)
    fake.defect = 1
    with pytest.raises(DefectNonzero):
        trace_response(strong, fake, 1e-3)


def test_rotation_tune(mild, mild_minimax13):
    target = mild_minimax13.rotation_number + 0.001
    _, orbit, eps = rotation_tune(mild, mild_minimax13, target)
    assert orbit.rotation_number == pytest.approx(target, abs=1e-6)
    assert abs(eps) < 0.05


def test_search_argument_checks(strong):
    with pytest.raises(ValueError):
        find_birkhoff(strong, 2, 4)
    with pytest.raises(ValueError):
        find_birkhoff(strong, 3, 5)
    with pytest.raises(OrderViolation):
        find_birkhoff(strong, 1, 3, seed=Configuration((0.0, 2.0, 1.0), 1, 3))
