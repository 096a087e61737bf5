import math

import numpy as np
import pytest

from spherebilliards.manifolds import (
    MINUS,
    PLUS,
    STABLE,
    UNSTABLE,
    entropy_certificate,
    find_homoclinic,
    grow_branch,
    hyperbolic_frame,
    loop_intersection_numbers,
    return_map,
)


def test_hyperbolic_frame(strong_min12):
    f = hyperbolic_frame(None, strong_min12)
    assert f.lam > 1
    mu = float(f.v_s @ f.matrix @ f.v_s) / float(f.v_s @ f.v_s)
    assert f.lam * mu == pytest.approx(1.0, abs=1e-8)
    assert f.residual < 1e-9
    assert f.v_u[0] >= 0 and f.v_s[0] >= 0


def test_return_map_fixes_base_and_inverts(strong, strong_min12):
    o = strong_min12
    base = np.array([o.config.points[0], o.phase_points[0].theta])
    assert np.allclose(return_map(strong, o, base), base, atol=1e-9)
    z = base + np.array([0.013, -0.007])
    back = return_map(strong, o, return_map(strong, o, z), forward=False)
    assert np.allclose(back, z, atol=1e-9)


def test_return_map_linearization_is_doubled_monodromy(strong, strong_min12):
    o = strong_min12
    f = hyperbolic_frame(strong, o)
    base = np.array([o.config.points[0], o.phase_points[0].theta])
    h = 1e-6
    J = np.column_stack([(return_map(strong, o, base + h * e) - return_map(strong, o, base - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(J, f.matrix, atol=1e-5 * np.abs(f.matrix).max())


@pytest.mark.parametrize("kind", [UNSTABLE, STABLE])
def test_branch_is_invariant(strong, strong_min12, kind):
    b = grow_branch(strong, strong_min12, kind, PLUS, 0.3 * strong.length)
    assert b.complete and b.error is None
    g = b._grower
    forward = kind == UNSTABLE
    # polyline vertices of generation k map onto generation k + 1 at the same fundamental parameter
    for T in b.param[: len(b.param) // 2 : 7]:
        gen, t = int(math.floor(T)), T - math.floor(T)
        img = return_map(strong, strong_min12, g.point(gen, t), forward)
        assert np.allclose(img, g.point(gen + 1, t), atol=1e-12)
    # seed segment is continuous across the generation boundary
    assert np.allclose(g.seed(1.0), g.point(1, 0.0), atol=1e-14)
    assert b.arclength <= 0.3 * strong.length + 1e-12


def test_branch_respects_spacing(strong, strong_min12):
    sp = 1e-3 * strong.length
    b = grow_branch(strong, strong_min12, UNSTABLE, MINUS, 0.2 * strong.length, max_spacing=sp)
    gaps = np.linalg.norm(np.diff(b.points, axis=0), axis=1)
    assert gaps.max() <= sp * (1 + 1e-9)


def test_not_hyperbolic_is_not_applicable(mild, mild_minimax13):
    cert = entropy_certificate(mild, mild_minimax13, 1.0)
    assert not cert.applicable and not cert.found
    assert cert.message.startswith("not applicable")


@pytest.fixture(scope="module")
def certificate(strong, strong_min12):
    return entropy_certificate(strong, strong_min12, strong.length)


@pytest.mark.slow
def test_certificate_finds_transverse_homoclinic_point(strong, strong_min12, certificate):
    c = certificate
    assert c.applicable and c.found
    x = c.crossing
    assert x.refined and x.angle > 1e-4
    # the crossing lies on W^s: forward iterates approach the orbit (modulo deck shifts)
    o = strong_min12
    base = np.array([o.config.points[0], o.phase_points[0].theta])
    L = strong.length
    z = np.array(x.lifted)
    d0 = _cover_distance(z, base, L)
    dists = []
    for _ in range(4):
        z = return_map(strong, o, z)
        dists.append(_cover_distance(z, base, L))
    assert min(dists) < 1e-2 * d0


def _cover_distance(z, base, L):
    ds = (z[0] - base[0] + L / 2) % L - L / 2
    return math.hypot(ds, z[1] - base[1])


@pytest.mark.slow
def test_homoclinic_loops_have_zero_intersection(strong, certificate):
    for su in (PLUS, MINUS):
        for ss in (PLUS, MINUS):
            bu, bs = certificate.branches[UNSTABLE, su], certificate.branches[STABLE, ss]
            cr = find_homoclinic(bs, bu, strong.length)
            assert all(n == 0 for n in loop_intersection_numbers(bu, bs, cr, strong.length))
