"""The billiard map F(s, theta) = (s1, theta1) and its generating function.

Angles are measured from the positive tangent, with Gamma counterclockwise
(Q on the left), so the outgoing direction at (s, theta) is
``cos(theta) T + sin(theta) N`` with N the inward normal.  The generating
function is ``S(s1, s2) = -d(Gamma(s1), Gamma(s2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import GrazingHit, NoHit
from .geometry import GeodesicState, _conformal_rhs, geodesic_distance, integrate_conformal, normalize
from .table import Table

THETA_MIN = 1e-4


@dataclass(frozen=True)
class PhasePoint:
    """(s, theta) in M = Gamma x (0, pi)."""

    s: float
    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < math.pi:
            raise ValueError(f"theta = {self.theta!r} outside (0, pi)")

    def reversed(self) -> "PhasePoint":
        """Time reversal Theta(s, theta) = (s, pi - theta)."""
        return PhasePoint(self.s, math.pi - self.theta)


@dataclass(frozen=True)
class ChordRecord:
    """One flight of the billiard: endpoints, g-length and Jacobi data.

    ``advance`` is the lifted increment s1 - s in (0, L); ``jacobi`` is the
    fundamental matrix of J'' + K J = 0 over the flight (columns for
    (J, J')(0) = (1, 0) and (0, 1)); ``samples`` are points along the chord.
    """

    start: PhasePoint
    end: PhasePoint
    flight_length: float
    advance: float
    departure: GeodesicState
    arrival: GeodesicState
    jacobi: np.ndarray
    samples: np.ndarray


def outgoing_direction(table: Table, s: float, theta: float) -> tuple[np.ndarray, np.ndarray]:
    x, T, N = table.frame(s)
    return x, math.cos(theta) * T + math.sin(theta) * N


def _min_chord(table: Table, theta: float) -> float:
    """Lower bound for a round-metric chord leaving at ``theta``: the chord of the tightest osculating circle."""
    return 2.0 * math.atan(math.sin(theta) / max(table.kappa_max, 1e-12))


def _reflect_angle(table: Table, y: np.ndarray, w: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Arc length label, post-reflection angle and frame point at the hit point ``y``."""
    psi = table.polar(y)[1]
    x1, T1, N1 = table.frame_psi(psi)
    theta1 = math.atan2(-float(np.dot(w, N1)), float(np.dot(w, T1)))
    return table.s_of_psi(psi), theta1, x1


def _hit_round(table: Table, x: np.ndarray, v: np.ndarray, theta: float):
    c, e1, e2 = table.center, table.e1, table.e2
    cx, cv = float(c @ x), float(c @ v)
    ex, ev = float(e1 @ x), float(e1 @ v)
    fx, fv = float(e2 @ x), float(e2 @ v)
    inside = table.inside_components

    def f(t):
        ct, st = math.cos(t), math.sin(t)
        return inside(ct * cx + st * cv, ct * ex + st * ev, ct * fx + st * fv)

    h = min(0.2, 0.25 * _min_chord(table, theta))
    t_prev = h
    if f(t_prev) >= 0.0:
        raise NoHit("first march sample already outside the table")
    t = t_prev
    while True:
        t = t_prev + h
        if t > 2.0 * math.pi:
            raise NoHit(f"no return to the boundary within 2 pi (theta = {theta:.6g})")
        if f(t) > 0.0:
            break
        t_prev = t
    t_hit = brentq(f, t_prev, t, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    c, s = math.cos(t_hit), math.sin(t_hit)
    y = c * x + s * v
    w = -s * x + c * v
    Phi = np.array([[c, s], [-s, c]])
    ts = np.linspace(0.0, t_hit, 9)
    samples = np.cos(ts)[:, None] * x + np.sin(ts)[:, None] * v
    return t_hit, normalize(y), w, Phi, samples


def _hit_conformal(table: Table, x: np.ndarray, v: np.ndarray, theta: float):
    m = table.metric
    u = m.unit(x, v)

    def event(t, y):
        return table.inside(y[0:3])

    event.terminal = True
    event.direction = 1.0
    horizon = 1.5 * table.diameter + 0.1
    first = 1e-3 * math.sin(theta)
    sol = integrate_conformal(
        m, x, u, horizon, jacobi=np.array([1.0, 0.0, 0.0, 1.0]), events=event, dense=True, first_step=first
    )
    if not sol.t_events[0].size:
        raise NoHit(f"no return to the boundary within {horizon:.4g} (theta = {theta:.6g})")
    t_hit = float(sol.t_events[0][0])
    y = np.array(sol.y_events[0][0], dtype=float)
    # Newton polish of the event time; corrections are ~1e-10 so a first-order flow step suffices
    for _ in range(2):
        f0 = table.inside(y[0:3])
        probe = 1e-7
        slope = (table.inside(y[0:3] + probe * y[3:6]) - f0) / probe
        if slope <= 0.0:
            break
        dt = -f0 / slope
        y = y + dt * _rhs_eval(m, y)
        t_hit += dt
        if abs(dt) < 1e-15:
            break
    xe = normalize(y[0:3])
    we = m.unit(xe, y[3:6])
    Phi = np.array([[y[6], y[8]], [y[7], y[9]]])
    ts = np.linspace(0.0, t_hit, 9)
    samples = np.array([normalize(sol.sol(t)[0:3]) for t in ts])
    return t_hit, xe, we, Phi, samples


def _rhs_eval(metric, y):
    return _conformal_rhs(metric, (len(y) - 6) // 2)(0.0, y)


def billiard_map(table: Table, x: PhasePoint, theta_min: float = THETA_MIN) -> tuple[PhasePoint, ChordRecord]:
    """Shoot from Gamma(s) at angle theta, find the first return and reflect."""
    s = x.s % table.length
    p, v = outgoing_direction(table, s, x.theta)
    if table.metric.is_round:
        t_hit, y, w, Phi, samples = _hit_round(table, p, v, x.theta)
    else:
        t_hit, y, w, Phi, samples = _hit_conformal(table, p, v, x.theta)
    s1, theta1, y_on = _reflect_angle(table, y, w)
    if not theta_min <= theta1 <= math.pi - theta_min:
        raise GrazingHit(f"grazing hit theta1 = {theta1:.3g} at s1 = {s1:.9g} from ({s:.9g}, {x.theta:.9g})")
    advance = (s1 - s) % table.length
    end = PhasePoint(s1, theta1)
    m = table.metric
    record = ChordRecord(
        start=PhasePoint(s, x.theta),
        end=end,
        flight_length=float(t_hit),
        advance=float(advance),
        departure=GeodesicState(p, m.unit(p, v)),
        arrival=GeodesicState(y_on, m.unit(y_on, w), float(t_hit)),
        jacobi=Phi,
        samples=samples,
    )
    return end, record


def inverse_map(table: Table, x: PhasePoint, theta_min: float = THETA_MIN) -> PhasePoint:
    """F^-1 = Theta o F o Theta."""
    return billiard_map(table, x.reversed(), theta_min)[0].reversed()


def map_point(table: Table, x: PhasePoint, theta_min: float = THETA_MIN) -> PhasePoint:
    return billiard_map(table, x, theta_min)[0]


# -- generating function ------------------------------------------------------


@dataclass(frozen=True)
class Chord:
    """Minimizing geodesic between two boundary points with its reflection angles.

    ``theta_out`` is the angle of the chord at ``s1``; ``theta_in`` is the
    post-reflection angle at ``s2``, so (s1, theta_out) maps to (s2, theta_in).
    """

    s1: float
    s2: float
    length: float
    theta_out: float
    theta_in: float


def chord_between(table: Table, s1: float, s2: float, guess=None) -> Chord:
    if (s1 - s2) % table.length == 0.0:
        raise ValueError("generating function needs s1 != s2 (mod L)")
    p, T1, N1 = table.frame(s1)
    q, T2, N2 = table.frame(s2)
    sol = geodesic_distance(table.metric, p, q, guess=guess)
    d, a = sol.departure, sol.arrival
    theta_out = math.atan2(float(np.dot(d, N1)), float(np.dot(d, T1)))
    theta_in = math.atan2(-float(np.dot(a, N2)), float(np.dot(a, T2)))
    return Chord(float(s1), float(s2), sol.length, theta_out, theta_in)


def generating_value(table: Table, s1: float, s2: float) -> float:
    """S(s1, s2) = -d(Gamma(s1), Gamma(s2))."""
    return -chord_between(table, s1, s2).length


def generating_partials(table: Table, s1: float, s2: float) -> tuple[float, float]:
    """(d1 S, d2 S) = (cos theta1, -cos theta2) from the chord's end directions."""
    c = chord_between(table, s1, s2)
    return math.cos(c.theta_out), -math.cos(c.theta_in)


# -- orbits of the map -------------------------------------------------------


@dataclass
class OrbitSegment:
    """Result of ``iterate``: the points reached, the flights, and why it stopped."""

    points: list[PhasePoint]
    chords: list[ChordRecord]
    complete: bool
    error: str | None = None

    @property
    def lifted_s(self) -> np.ndarray:
        """Arclength positions on the universal cover."""
        out = [self.points[0].s]
        for c in self.chords:
            out.append(out[-1] + c.advance)
        return np.array(out)


def iterate(table: Table, x: PhasePoint, n: int, theta_min: float = THETA_MIN) -> OrbitSegment:
    """Orbit (x, Fx, ..., F^n x); a grazing hit or failed return stops early, flagged."""
    if n < 0:
        raise ValueError("n must be >= 0")
    pts = [PhasePoint(x.s % table.length, x.theta)]
    chords: list[ChordRecord] = []
    for _ in range(n):
        try:
            nxt, rec = billiard_map(table, pts[-1], theta_min)
        except (GrazingHit, NoHit) as exc:
            return OrbitSegment(pts, chords, False, f"{type(exc).__name__}: {exc}")
        pts.append(nxt)
        chords.append(rec)
    return OrbitSegment(pts, chords, True)


@dataclass(frozen=True)
class TwistReport:
    s: float
    thetas: np.ndarray
    lifted_s1: np.ndarray
    twist: np.ndarray
    monotone: bool
    min_twist: float
    inverse: bool = False


def twist_check(table: Table, s: float, samples: int = 64, inverse: bool = False) -> TwistReport:
    """Sample theta -> s1(s, theta) and check strict monotonicity on the cover.

    ``twist`` is d s1 / d theta from the Jacobi field of the flight,
    ``J(t)/sin(theta1)`` with J(0) = 0, J'(0) = 1.  For the inverse map the
    sign flips.
    """
    thetas = np.linspace(0.0, math.pi, samples + 2)[1:-1]
    lifted = np.empty(samples)
    tw = np.empty(samples)
    for i, th in enumerate(thetas):
        if inverse:
            end, rec = billiard_map(table, PhasePoint(s, math.pi - th))
            lifted[i] = s + rec.advance - table.length
            tw[i] = -rec.jacobi[0, 1] / math.sin(end.theta)
        else:
            end, rec = billiard_map(table, PhasePoint(s, th))
            lifted[i] = s + rec.advance
            tw[i] = rec.jacobi[0, 1] / math.sin(end.theta)
    diffs = np.diff(lifted)
    monotone = bool(np.all(diffs < 0.0) if inverse else np.all(diffs > 0.0))
    min_tw = float(tw.max() if inverse else tw.min())
    return TwistReport(float(s), thetas, lifted, tw, monotone, min_tw, inverse)


def invariant_density(table: Table, theta) -> np.ndarray:
    """Density of mu = sin(theta) ds dtheta / (2 |Gamma|)."""
    return np.sin(theta) / (2.0 * table.length)
