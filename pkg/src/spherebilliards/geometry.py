"""Riemannian structure on S^2: curvature, geodesic flow, distance and Jacobi fields.

Points are unit vectors in R^3.  A metric is either the round one or
``g = exp(2*phi) * g_round`` with ``phi`` a finite real spherical-harmonic
expansion.  Angles are conformally invariant, so directions are handled as
ambient tangent vectors and only lengths carry the conformal factor.

The round metric uses closed forms (great circles, ``J = a cos t + b sin t``);
the conformal metric integrates

    x'' = -|x'|^2 x - 2 <x', grad phi> x' + |x'|^2 grad_T phi
    J'' = -K J,   K = exp(-2 phi) (1 - Lap phi)

with an embedded Runge-Kutta pair (DOP853) in g-arclength.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AmbiguousMinimizer, IntegrationFailure, NoConvergence, NotPositivelyCurved
from .harmonics import HarmonicField

ROUND = "round"
CONFORMAL = "conformal"


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def round_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Great-circle distance, stable near 0 and pi."""
    return math.atan2(np.linalg.norm(np.cross(p, q)), float(np.dot(p, q)))


def round_log(x: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Round-metric logarithm at ``x``: tangent vector of length d0(x, q) pointing at ``q``."""
    w = q - np.dot(x, q) * x
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return np.zeros(3)
    return w / nw * math.atan2(nw, float(np.dot(x, q)))


def any_perpendicular(p: np.ndarray) -> np.ndarray:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(p)))] = 1.0
    return normalize(np.cross(p, axis))


@dataclass(frozen=True)
class Metric:
    """Round or conformal metric on the unit sphere.

    ``harmonics`` holds ``(l, m, coeff)`` triples of the conformal exponent.
    ``curvature_floor`` is the minimum of K over a latitude-longitude grid;
    construction fails if it is not positive.
    """

    kind: str = ROUND
    harmonics: tuple[tuple[int, int, float], ...] = ()
    rtol: float = 1e-10
    atol: float = 1e-10
    max_step: float = 0.25
    grid: int = 120
    curvature_floor: float = field(init=False)
    curvature_ceiling: float = field(init=False)
    factor_max: float = field(init=False)
    phi: HarmonicField = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in (ROUND, CONFORMAL):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        harm = tuple((int(l), int(m), float(c)) for l, m, c in self.harmonics)
        if self.kind == ROUND and any(c != 0.0 for _, _, c in harm):
            raise ValueError("round metric takes no harmonics")
        object.__setattr__(self, "harmonics", harm)
        object.__setattr__(self, "phi", HarmonicField(harm))
        if self.kind == ROUND:
            lo = hi = fmax = 1.0
        else:
            pts = sphere_grid(self.grid)
            ev = self.phi.evaluate(pts)
            K = np.exp(-2.0 * ev[0]) * (1.0 - ev[4])
            lo, hi = float(K.min()), float(K.max())
            fmax = float(np.exp(ev[0]).max())
            if lo <= 0.0:
                i = int(np.argmin(K))
                raise NotPositivelyCurved(f"K = {lo:.3g} <= 0 at {pts[i].round(6).tolist()}")
        object.__setattr__(self, "curvature_floor", lo)
        object.__setattr__(self, "curvature_ceiling", hi)
        object.__setattr__(self, "factor_max", fmax)

    @classmethod
    def round(cls, **kw) -> "Metric":
        return cls(kind=ROUND, **kw)

    @classmethod
    def conformal(cls, harmonics, **kw) -> "Metric":
        return cls(kind=CONFORMAL, harmonics=tuple(harmonics), **kw)

    @property
    def is_round(self) -> bool:
        return self.kind == ROUND

    @property
    def injectivity_bound(self) -> float:
        """Lower bound pi / sqrt(K_max) on the injectivity radius (Klingenberg)."""
        return math.pi / math.sqrt(self.curvature_ceiling)

    def conformal_factor(self, x: np.ndarray) -> np.ndarray | float:
        """exp(phi): g-length per unit round length."""
        if self.is_round:
            return 1.0 if np.ndim(x) == 1 else np.ones(len(x))
        return np.exp(self.phi.value(x))

    def norm(self, x: np.ndarray, v: np.ndarray) -> float:
        return float(self.conformal_factor(x) * np.linalg.norm(v))

    def unit(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Rescale the tangent vector ``v`` at ``x`` to g-norm 1."""
        v = np.asarray(v, dtype=float)
        v = v - np.dot(v, x) * x
        return v / self.norm(x, v)


def sphere_grid(n: int) -> np.ndarray:
    """Latitude-longitude grid of about 2 n^2 unit vectors, poles included."""
    th = np.linspace(0.0, math.pi, n + 1)
    ph = np.linspace(0.0, 2 * math.pi, 2 * n, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    return np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)


def gauss_curvature(metric: Metric, p: np.ndarray) -> float | np.ndarray:
    """K = exp(-2 phi)(1 - Lap_round phi); identically 1 for the round metric."""
    if metric.is_round:
        return 1.0 if np.ndim(p) == 1 else np.ones(len(p))
    ev = metric.phi.evaluate(p)
    return np.exp(-2.0 * ev[0]) * (1.0 - ev[4])


@dataclass(frozen=True)
class GeodesicState:
    """Point, g-unit tangent direction (ambient vector) and elapsed g-arclength."""

    point: np.ndarray
    direction: np.ndarray
    elapsed: float = 0.0

    @classmethod
    def make(cls, metric: Metric, point, direction, elapsed: float = 0.0) -> "GeodesicState":
        x = normalize(point)
        return cls(x, metric.unit(x, direction), float(elapsed))


@dataclass(frozen=True)
class JacobiState:
    value: float
    derivative: float

    def as_array(self) -> np.ndarray:
        return np.array([self.value, self.derivative])


def _conformal_rhs(metric: Metric, n_jacobi: int) -> Callable:
    field_ = metric.phi

    def rhs(t, y):
        x = y[0:3]
        u = y[3:6]
        ev = field_.evaluate(x)
        grad = ev[1:4]
        gT = grad - np.dot(grad, x) * x
        uu = np.dot(u, u)
        acc = -uu * x - 2.0 * np.dot(u, grad) * u + uu * gT
        out = np.empty_like(y)
        out[0:3] = u
        out[3:6] = acc
        if n_jacobi:
            K = math.exp(-2.0 * ev[0]) * (1.0 - ev[4])
            J = y[6::2]
            out[6::2] = y[7::2]
            out[7::2] = -K * J
        return out

    return rhs


def integrate_conformal(
    metric: Metric,
    x: np.ndarray,
    u: np.ndarray,
    t_end: float,
    jacobi: np.ndarray | None = None,
    events=None,
    dense: bool = False,
    first_step: float | None = None,
    max_step: float | None = None,
):
    """Run the geodesic (+ Jacobi) ODE; ``jacobi`` is a flat array of (J, J') pairs."""
    y0 = np.concatenate([x, u] + ([np.asarray(jacobi, dtype=float)] if jacobi is not None else []))
    n_j = 0 if jacobi is None else len(jacobi) // 2
    sol = solve_ivp(
        _conformal_rhs(metric, n_j),
        (0.0, t_end),
        y0,
        method="DOP853",
        rtol=metric.rtol,
        atol=metric.atol,
        events=events,
        dense_output=dense,
        first_step=first_step,
        max_step=max_step if max_step is not None else metric.max_step,
    )
    if sol.status < 0:
        raise IntegrationFailure(sol.message)
    return sol


def _project_state(metric: Metric, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = normalize(x)
    return x, metric.unit(x, u)


def geodesic_step(metric: Metric, state: GeodesicState, t: float) -> GeodesicState:
    """Flow the unit-speed geodesic for g-arclength ``t`` >= 0."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return state
    x, u = state.point, state.direction
    if metric.is_round:
        c, s = math.cos(t), math.sin(t)
        x1 = c * x + s * u
        u1 = -s * x + c * u
    else:
        sol = integrate_conformal(metric, x, u, t)
        x1, u1 = sol.y[0:3, -1], sol.y[3:6, -1]
    x1, u1 = _project_state(metric, x1, u1)
    return GeodesicState(x1, u1, state.elapsed + t)


def jacobi_matrix(metric: Metric, start: GeodesicState, t: float) -> tuple[GeodesicState, np.ndarray]:
    """End state after ``t`` and the 2x2 fundamental matrix of J'' + K J = 0.

    Columns are the solutions with (J, J')(0) = (1, 0) and (0, 1).
    """
    if metric.is_round:
        c, s = math.cos(t), math.sin(t)
        return geodesic_step(metric, start, t), np.array([[c, s], [-s, c]])
    if t == 0:
        return start, np.eye(2)
    sol = integrate_conformal(metric, start.point, start.direction, t, jacobi=np.array([1.0, 0.0, 0.0, 1.0]))
    y = sol.y[:, -1]
    x1, u1 = _project_state(metric, y[0:3], y[3:6])
    Phi = np.array([[y[6], y[8]], [y[7], y[9]]])
    return GeodesicState(x1, u1, start.elapsed + t), Phi


def jacobi_transport(metric: Metric, start: GeodesicState, j0: JacobiState, t: float) -> JacobiState:
    """Solve J'' + K(gamma(tau)) J = 0 along the geodesic from ``start`` for arclength ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    _, Phi = jacobi_matrix(metric, start, t)
    J = Phi @ j0.as_array()
    return JacobiState(float(J[0]), float(J[1]))


def first_zero(
    metric: Metric, start: GeodesicState, j0: JacobiState, horizon: float
) -> float | None:
    """First t in (0, horizon] where the transported J vanishes; None if it does not."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    J0, dJ0 = j0.value, j0.derivative
    if metric.is_round:
        # J = J0 cos t + dJ0 sin t = A sin(t + a)
        a = math.atan2(J0, dJ0)
        t = (math.pi - a) % math.pi
        if t == 0.0:
            t = math.pi
        return t if t <= horizon else None

    def ev(t, y):
        return y[6]

    ev.terminal = True
    # sign J takes just after t = 0; a zero at the start is not a crossing
    ev.direction = -1.0 if (J0 > 0 or (J0 == 0 and dJ0 > 0)) else 1.0
    sol = integrate_conformal(metric, start.point, start.direction, horizon, jacobi=np.array([J0, dJ0]), events=ev)
    if not sol.t_events[0].size:
        return None
    t = float(sol.t_events[0][0])
    # Newton polish on the exact flow
    for _ in range(3):
        st, Phi = jacobi_matrix(metric, start, t)
        J, dJ = Phi @ np.array([J0, dJ0])
        if dJ == 0.0:
            break
        step = J / dJ
        t -= step
        if abs(step) < 1e-14:
            break
    return t


def first_conjugate_time(metric: Metric, start: GeodesicState, horizon: float) -> float | None:
    """First conjugate point along the geodesic: zero of J with J(0)=0, J'(0)=1."""
    return first_zero(metric, start, JacobiState(0.0, 1.0), horizon)


@dataclass(frozen=True)
class GeodesicSolution:
    """Minimizing geodesic between two points: g-length and g-unit end directions."""

    length: float
    departure: np.ndarray
    arrival: np.ndarray


def geodesic_distance(
    metric: Metric,
    p: np.ndarray,
    q: np.ndarray,
    guess: GeodesicSolution | None = None,
    tol: float = 1e-12,
    check_ambiguity: bool = False,
) -> GeodesicSolution:
    """Distance and end directions of the minimizing geodesic from ``p`` to ``q``.

    Round metric: closed form.  Conformal metric: shooting on (length, departure
    angle) with Newton steps whose Jacobian comes from the velocity and the
    Jacobi field J(0)=0, J'(0)=1; the two columns are orthogonal so each Newton
    step is a pair of scalar divisions.  Extra starting angles are tried only
    after a failure, or all of them when ``check_ambiguity`` is set.
    """
    p = normalize(p)
    q = normalize(q)
    d0 = round_distance(p, q)
    if d0 == 0.0:
        z = np.zeros(3)
        return GeodesicSolution(0.0, z, z)
    if metric.is_round:
        if math.pi - d0 < 1e-15:
            v = any_perpendicular(p)
            return GeodesicSolution(math.pi, v, -v)
        v = normalize(q - np.dot(p, q) * p)
        w = normalize(np.dot(p, q) * q - p)
        return GeodesicSolution(d0, v, w)

    a = normalize(round_log(p, q))
    b = np.cross(p, a)
    if guess is not None:
        g = normalize(guess.departure)
        starts = [(guess.length, math.atan2(np.dot(g, b), np.dot(g, a)))]
    else:
        mid = normalize(p + q)
        starts = [(d0 * float(metric.conformal_factor(mid)), 0.0)]
    starts += [(starts[0][0], d) for d in (0.15, -0.15, 0.35, -0.35)]
    found: list[GeodesicSolution] = []
    for t0, ang0 in starts:
        sol = _shoot(metric, p, q, a, b, t0, ang0, tol)
        if sol is not None:
            found.append(sol)
            if not check_ambiguity:
                break
    if not found:
        raise NoConvergence(f"shooting failed between {p.round(6).tolist()} and {q.round(6).tolist()}")
    found.sort(key=lambda s: s.length)
    best = found[0]
    for other in found[1:]:
        if abs(other.length - best.length) < 1e-9 and np.linalg.norm(other.departure - best.departure) > 1e-6:
            raise AmbiguousMinimizer(f"two geodesics of length {best.length:.12g}")
    return best


def _shoot(metric, p, q, a, b, t, ang, tol, max_iter: int = 40) -> GeodesicSolution | None:
    fp = float(metric.conformal_factor(p))
    for _ in range(max_iter):
        if not (0.0 < t < 2 * math.pi * metric.factor_max):
            return None
        v = (math.cos(ang) * a + math.sin(ang) * b) / fp
        try:
            sol = integrate_conformal(metric, p, v, t, jacobi=np.array([0.0, 1.0]))
        except IntegrationFailure:
            return None
        y = sol.y[:, -1]
        X = normalize(y[0:3])
        U = y[3:6] - np.dot(y[3:6], X) * X
        miss = round_log(X, q)
        err = np.linalg.norm(miss)
        if err < tol:
            return GeodesicSolution(t, metric.unit(p, v), metric.unit(X, U))
        nu = np.linalg.norm(U)
        Uh = U / nu
        nrm = np.cross(X, Uh)
        J = y[6] * math.exp(-float(metric.phi.value(X)))
        if abs(J) < 1e-14:
            return None
        dt = np.dot(miss, Uh) / nu
        dang = np.dot(miss, nrm) / J
        if err < 1e-9 and abs(dt) < tol and abs(dang * J) < tol:
            # stagnated at integrator resolution
            return GeodesicSolution(t, metric.unit(p, v), metric.unit(X, U))
        # damp large corrections
        scale = min(1.0, 0.5 / max(abs(dang), 1e-300), 0.5 * t / max(abs(dt), 1e-300))
        t += scale * dt
        ang += scale * dang
    return None
