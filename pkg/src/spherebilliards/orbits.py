"""Birkhoff periodic orbits as critical points of the discrete action.

A (p, q) configuration is ``s_0 < ... < s_{q-1}`` on the universal cover of
Gamma, extended by ``s_{k+q} = s_k + p L``.  Its action is
``W = sum_k S(s_k, s_{k+1})`` with ``S = -d``; critical points are billiard
orbits.  Minimizers come from a Newton-type descent; the second family is found
by minimax over the position of one vertex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.optimize import minimize_scalar

from .billiard import PhasePoint, chord_between, map_point
from .errors import (
    DefectNonzero,
    NoConvergence,
    NotElliptic,
    OrderViolation,
    SupportOverlap,
    TargetUnreachable,
    TwistDegenerate,
)
from .linearize import TangentMap, monodromy
from .table import Table, normal_perturbation

HYPERBOLIC = "hyperbolic"
ELLIPTIC = "elliptic"
PARABOLIC = "parabolic"
CLASS_TOL = 1e-6
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class Configuration:
    """Ordered lifted arclengths of one period with winding ``p``."""

    points: tuple[float, ...]
    p: int
    q: int

    def __post_init__(self):
        if len(self.points) != self.q:
            raise ValueError(f"expected {self.q} points, got {len(self.points)}")

    @classmethod
    def regular(cls, table: Table, p: int, q: int, base: float = 0.0) -> "Configuration":
        return cls(tuple(base + k * p * table.length / q for k in range(q)), p, q)

    def array(self) -> np.ndarray:
        return np.array(self.points)

    def extended(self, length: float) -> np.ndarray:
        """s_0, ..., s_q with s_q = s_0 + pL."""
        s = self.array()
        return np.append(s, s[0] + self.p * length)

    def ordered(self, length: float) -> bool:
        d = np.diff(self.extended(length))
        return bool(np.all(d > 0.0) and np.all(d < length))

    def with_points(self, s) -> "Configuration":
        return Configuration(tuple(float(v) for v in s), self.p, self.q)

    def relabeled(self, shift: int, length: float) -> "Configuration":
        """Cyclic relabeling by ``shift`` positions, kept on the cover."""
        s = self.array()
        out = [s[(k + shift) % self.q] + ((k + shift) // self.q) * self.p * length for k in range(self.q)]
        return self.with_points(out)


@dataclass
class PeriodicOrbit:
    config: Configuration
    phase_points: list[PhasePoint]
    trace: float
    classification: str
    degenerate: bool
    grad_residual: float
    monodromy: np.ndarray
    symmetric: bool
    defect: int
    rotation_number: float | None = None
    kind: str = "min"
    hessian_min_eig: float | None = None

    @property
    def p(self) -> int:
        return self.config.p

    @property
    def q(self) -> int:
        return self.config.q


# -- action and derivatives -------------------------------------------------


def _chords(table: Table, config: Configuration):
    s = config.extended(table.length)
    return [chord_between(table, s[k], s[k + 1]) for k in range(config.q)]


def action(table: Table, config: Configuration) -> float:
    return -float(sum(c.length for c in _chords(table, config)))


def action_gradient(table: Table, config: Configuration) -> np.ndarray:
    """dW/ds_k = d2 S(s_{k-1}, s_k) + d1 S(s_k, s_{k+1}) = cos(theta_out_k) - cos(theta_in_k)."""
    ch = _chords(table, config)
    q = config.q
    return np.array([math.cos(ch[k].theta_out) - math.cos(ch[k - 1].theta_in) for k in range(q)])


def _partials(table, s1, s2):
    c = chord_between(table, s1, s2)
    return np.array([math.cos(c.theta_out), -math.cos(c.theta_in)])


def chord_hessian(table: Table, s1: float, s2: float, h: float | None = None) -> np.ndarray:
    """[[S11, S12], [S21, S22]] by central differences of the analytic partials, one Richardson level."""
    if h is None:
        h = 1e-5 * table.length

    def diff(step):
        cols = []
        for e in (np.array([step, 0.0]), np.array([0.0, step])):
            a = _partials(table, s1 + e[0], s2 + e[1])
            b = _partials(table, s1 - e[0], s2 - e[1])
            cols.append((a - b) / (2 * step))
        # rows: d1 S, d2 S ; columns: derivative w.r.t. s1, s2
        return np.column_stack(cols)

    return (4.0 * diff(h / 2) - diff(h)) / 3.0


def _chord_hessians(table: Table, config: Configuration, h=None) -> list[np.ndarray]:
    s = config.extended(table.length)
    return [chord_hessian(table, s[k], s[k + 1], h) for k in range(config.q)]


def _assemble(blocks: list[np.ndarray], q: int) -> np.ndarray:
    H = np.zeros((q, q))
    for k, B in enumerate(blocks):
        j = (k + 1) % q
        H[k, k] += B[0, 0]
        H[j, j] += B[1, 1]
        H[k, j] += B[0, 1]
        H[j, k] += B[1, 0]
    return H


def action_hessian(table: Table, config: Configuration, h: float | None = None) -> np.ndarray:
    """Cyclic tridiagonal Hessian of W (corners couple s_{q-1} and s_0)."""
    return _assemble(_chord_hessians(table, config, h), config.q)


def mackay_meiss_trace(table: Table, config: Configuration, h: float | None = None) -> float:
    """tau = 2 + (-1)^n det(D^2 W) / prod S12(s_{i-1}, s_i)."""
    blocks = _chord_hessians(table, config, h)
    H = _assemble(blocks, config.q)
    H = 0.5 * (H + H.T)
    cross = np.array([0.5 * (B[0, 1] + B[1, 0]) for B in blocks])
    if np.any(np.abs(cross) < 1e-10):
        raise TwistDegenerate(f"cross partial {np.abs(cross).min():.3g} below 1e-10")
    n = config.q
    return 2.0 + (-1) ** n * float(np.linalg.det(H)) / float(np.prod(cross))


# -- search -------------------------------------------------------------------


def _newton_polish(table, config, tol=1e-11, max_iter=30):
    s = config.array()
    g = action_gradient(table, config)
    for _ in range(max_iter):
        if np.abs(g).max() < tol:
            break
        H = action_hessian(table, config.with_points(s))
        H = 0.5 * (H + H.T)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        base = np.abs(g).max()
        while t > 1e-4:
            trial = config.with_points(s + t * step)
            if trial.ordered(table.length):
                g_t = action_gradient(table, trial)
                if np.abs(g_t).max() < base or t < 1e-3:
                    s, g = trial.array(), g_t
                    break
            t *= 0.5
        else:
            break
        if np.abs(step).max() * t < 1e-15:
            break
    return config.with_points(s), float(np.abs(g).max())


def _minimize(table, config, max_iter=200, tol=1e-9):
    """Damped Newton with eigenvalue shifts and Armijo backtracking, staying in the ordered cone."""
    L = table.length
    s = config.array()
    W = action(table, config)
    g = action_gradient(table, config)
    for _ in range(max_iter):
        if np.abs(g).max() < tol:
            return config.with_points(s)
        H = action_hessian(table, config.with_points(s))
        H = 0.5 * (H + H.T)
        w, V = np.linalg.eigh(H)
        w = np.maximum(np.abs(w), 1e-3 * max(1.0, np.abs(w).max()))
        step = -V @ ((V.T @ g) / w)
        cap = 0.25 * np.diff(config.with_points(s).extended(L)).min()
        if np.abs(step).max() > cap:
            step *= cap / np.abs(step).max()
        t = 1.0
        while True:
            trial = config.with_points(s + t * step)
            if trial.ordered(L):
                W_t = action(table, trial)
                if W_t <= W + 1e-4 * t * float(g @ step):
                    break
            t *= 0.5
            if t < 1e-10:
                raise NoConvergence("line search failed in action descent")
        s = trial.array()
        W = W_t
        g = action_gradient(table, trial)
    if np.abs(g).max() < 1e-6:
        return config.with_points(s)
    raise NoConvergence(f"descent did not reach |grad| < {tol} (at {np.abs(g).max():.3g})")


def _check_type(p, q):
    if q < 2 or p < 1 or gcd(p, q) != 1 or 2 * p > q:
        raise ValueError(f"invalid rotation type ({p}, {q}); need gcd = 1, q >= 2, 1 <= p <= q/2")


def find_birkhoff(
    table: Table,
    p: int,
    q: int,
    seed: Configuration | None = None,
    kind: str = "min",
) -> PeriodicOrbit:
    """Birkhoff (p, q) orbit: action minimizer (``kind="min"``) or minimax saddle (``"minimax"``)."""
    _check_type(p, q)
    config = seed if seed is not None else Configuration.regular(table, p, q)
    if not config.ordered(table.length):
        raise OrderViolation("seed configuration is not ordered")
    if kind == "min":
        crit = _minimize(table, config)
    elif kind == "minimax":
        crit = _minimax(table, _minimize(table, config))
    else:
        raise ValueError(f"unknown orbit kind {kind!r}")
    crit, res = _newton_polish(table, crit)
    if res >= 1e-9:
        raise NoConvergence(f"Newton polish stalled at |grad| = {res:.3g}")
    return orbit_from_config(table, crit, kind=kind, residual=res)


def _minimax(table: Table, minimizer: Configuration) -> Configuration:
    """Fix s_0 = sigma, minimize over the rest, maximize the constrained minimum over sigma."""
    L = table.length
    s_min = minimizer.array()
    q = minimizer.q
    lo, hi = s_min[0], s_min[1] if q > 1 else s_min[0] + L
    cache: dict[float, Configuration] = {}

    def reduced(sigma):
        shift = sigma - s_min[0]
        frac = shift / (hi - lo)
        start = s_min + frac * (np.append(s_min[1:], s_min[0] + minimizer.p * L) - s_min)
        start[0] = sigma
        cfg = minimizer.with_points(start)
        sol = _constrained_min(table, cfg)
        cache[sigma] = sol
        return -action(table, sol)

    res = minimize_scalar(reduced, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7 * L})
    return cache.get(res.x) or cache[min(cache, key=lambda k: abs(k - res.x))]


def _constrained_min(table, config, tol=1e-10, max_iter=60):
    """Minimize W over s_1..s_{q-1} with s_0 fixed."""
    L = table.length
    s = config.array()
    for _ in range(max_iter):
        cfg = config.with_points(s)
        g = action_gradient(table, cfg)[1:]
        if np.abs(g).max() < tol:
            break
        H = action_hessian(table, cfg)[1:, 1:]
        H = 0.5 * (H + H.T)
        w, V = np.linalg.eigh(H)
        w = np.maximum(np.abs(w), 1e-3 * max(1.0, np.abs(w).max()))
        step = -V @ ((V.T @ g) / w)
        cap = 0.25 * np.diff(cfg.extended(L)).min()
        if np.abs(step).max() > cap:
            step *= cap / np.abs(step).max()
        W = action(table, cfg)
        t = 1.0
        while t > 1e-10:
            trial = s.copy()
            trial[1:] += t * step
            tc = config.with_points(trial)
            if tc.ordered(L) and action(table, tc) <= W + 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        s = trial
    return config.with_points(s)


def classify(tau: float, tol: float = CLASS_TOL) -> tuple[str, bool]:
    """(classification, degenerate) with a dead zone of width ``tol`` around +-2."""
    if abs(tau - 2.0) < tol or abs(tau + 2.0) < tol:
        return PARABOLIC, abs(tau - 2.0) < tol
    return (HYPERBOLIC if abs(tau) > 2.0 else ELLIPTIC), False


def orbit_from_config(
    table: Table, config: Configuration, kind: str = "min", residual: float | None = None
) -> PeriodicOrbit:
    chords = _chords(table, config)
    if residual is None:
        residual = float(np.abs(action_gradient(table, config)).max())
    pts = [PhasePoint(float(config.points[k] % table.length), chords[k].theta_out) for k in range(config.q)]
    M = monodromy(table, pts)
    tau = M.trace
    cls_, degenerate = classify(tau)
    symmetric = any(abs(x.theta - math.pi / 2) < SYMMETRY_TOL for x in pts)
    orbit = PeriodicOrbit(
        config=config,
        phase_points=pts,
        trace=tau,
        classification=cls_,
        degenerate=degenerate,
        grad_residual=residual,
        monodromy=M.entries,
        symmetric=symmetric,
        defect=0,
        kind=kind,
    )
    orbit.defect = defect(orbit, 1e-6 * table.length, table.length)
    if cls_ == ELLIPTIC:
        orbit.rotation_number = rotation_number(orbit)
    return orbit


# -- rotation numbers ---------------------------------------------------------


def rotation_number(orbit: PeriodicOrbit) -> float:
    """rho in (0, 1/2) with cos(2 pi rho) = tau / 2."""
    if orbit.classification != ELLIPTIC:
        raise NotElliptic(f"tau = {orbit.trace:.9g} is not elliptic")
    return math.acos(orbit.trace / 2.0) / (2.0 * math.pi)


def projective_rotation_number(M: np.ndarray, iterations: int = 2_000_000, chunk: int = 1000) -> float:
    """Mean angle increment of v -> M v divided by 2 pi, folded into [0, 1/2].

    Vectorized: the powers M^0..M^{chunk-1} are applied to the chunk start
    vectors in one product.
    """
    M = np.asarray(M, dtype=float)
    powers = np.empty((chunk + 1, 2, 2))
    powers[0] = np.eye(2)
    for k in range(chunk):
        powers[k + 1] = M @ powers[k]
    n_chunks = max(1, iterations // chunk)
    starts = np.empty((n_chunks, 2))
    v = np.array([1.0, 0.0])
    step = powers[chunk]
    for j in range(n_chunks):
        starts[j] = v
        v = step @ v
        v /= np.linalg.norm(v)
    vecs = np.einsum("kab,jb->jka", powers, starts)  # (chunk start, power, 2)
    a, b = vecs[:, :-1, :], vecs[:, 1:, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = np.einsum("jki,jki->jk", a, b)
    total = float(np.arctan2(cross, dot).sum())
    rho = abs(total) / (2.0 * math.pi * n_chunks * chunk)
    rho = rho % 1.0
    return min(rho, 1.0 - rho)


@dataclass(frozen=True)
class ResonanceReport:
    rho: float
    convergents: list[tuple[int, int]]
    errors: list[float]
    constants: list[float]
    flagged: bool
    resonance: tuple[int, int] | None
    min_constant: float


def continued_fraction(x: float, max_terms: int = 64) -> list[int]:
    """Partial quotients of the exact binary value of ``x``."""
    fr = Fraction(x)
    out = []
    while len(out) < max_terms:
        a = math.floor(fr)
        out.append(int(a))
        fr -= a
        if fr == 0:
            break
        fr = 1 / fr
    return out


def resonance_flag(rho: float, max_q: int = 100_000, tol: float = 1e-8, const_tol: float = 1e-3) -> ResonanceReport:
    """Continued-fraction audit of ``rho``.

    A convergent p/q (q <= max_q) flags a near-resonance when
    |rho - p/q| < tol and the approximation constant q^2 |rho - p/q| is below
    ``const_tol``; the second condition keeps badly approximable numbers such
    as the golden mean (constants near 1/sqrt(5)) unflagged.
    """
    cf = continued_fraction(rho)
    h0, h1 = 1, cf[0]
    k0, k1 = 0, 1
    conv = [(h1, k1)]
    for a in cf[1:]:
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > max_q:
            break
        conv.append((h1, k1))
    errors = [abs(rho - p / q) for p, q in conv]
    consts = [q * q * e for (p, q), e in zip(conv, errors)]
    hit = None
    for (p, q), e, c in zip(conv, errors, consts):
        if e < tol and c < const_tol:
            hit = (p, q)
            break
    return ResonanceReport(rho, conv, errors, consts, hit is not None, hit, float(min(consts)))


# -- defect and shared reflections -------------------------------------------


def _cluster_count(values: np.ndarray, tol: float, period: float) -> int:
    v = np.sort(np.mod(values, period))
    if v.size == 0:
        return 0
    gaps = np.diff(np.append(v, v[0] + period))
    return max(1, int(np.sum(gaps > tol)))


def defect(orbit: PeriodicOrbit, separation_tol: float, length: float) -> int:
    """|O(p)| - |pi_1 O(p)| (nonsymmetric) or |O(p)|/2 + 1 - |pi_1 O(p)| (symmetric)."""
    n = len(orbit.phase_points)
    t = _cluster_count(np.array([x.s for x in orbit.phase_points]), separation_tol, length)
    if orbit.symmetric and n % 2 == 0:
        return n // 2 + 1 - t
    return n - t


@dataclass(frozen=True)
class SharedReport:
    pairs: list[tuple[int, int, float]]

    @property
    def count(self) -> int:
        return len(self.pairs)


def shared_reflection_check(a: PeriodicOrbit, b: PeriodicOrbit, tol: float, length: float) -> SharedReport:
    pairs = []
    for i, x in enumerate(a.phase_points):
        for j, y in enumerate(b.phase_points):
            d = abs((x.s - y.s + length / 2) % length - length / 2)
            if d <= tol:
                pairs.append((i, j, float(x.s)))
    return SharedReport(pairs)


# -- central annulus --------------------------------------------------------


@lru_cache(maxsize=64)
def delta_star(table: Table, samples: int = 1000) -> float:
    """min over a grid of s of the angle of F(s, pi/2)."""
    s = np.linspace(0.0, table.length, samples, endpoint=False)
    return float(min(map_point(table, PhasePoint(float(v), math.pi / 2)).theta for v in s))


@dataclass(frozen=True)
class AnnulusReport:
    n: int
    delta_star: float
    delta_n: float
    delta_n_star: float
    thetas: tuple[float, ...]
    passed: bool
    gauss_bonnet_residual: float


def central_annulus_audit(table: Table, orbit: PeriodicOrbit, samples: int = 1000) -> AnnulusReport:
    n = len(orbit.phase_points)
    ds = delta_star(table, samples)
    dn = table.total_curvature / (2.0 * n)
    dns = min(ds, dn)
    thetas = tuple(x.theta for x in orbit.phase_points)
    ok = any(dns <= th <= math.pi - dns for th in thetas)
    return AnnulusReport(n, ds, dn, dns, thetas, ok, table.gauss_bonnet_residual)


# -- perturbation response ---------------------------------------------------


@dataclass(frozen=True)
class TraceResponse:
    vertex: int
    s0: float
    eps: float
    tau: float
    tau_eps: float
    b: float
    measured_slope: float
    relative_error: float
    monodromy: np.ndarray
    monodromy_eps: np.ndarray
    shear_residual: float
    two_sided_residual: float
    orbit_eps: PeriodicOrbit
    table_eps: Table


def _rebased(orbit: PeriodicOrbit, vertex: int, length: float) -> Configuration:
    return orbit.config.relabeled(vertex, length)


def _isolation_check(table: Table, orbit: PeriodicOrbit, vertex: int, width: float) -> None:
    if orbit.defect != 0:
        raise DefectNonzero(f"orbit defect {orbit.defect} != 0")
    L = table.length
    s0 = orbit.phase_points[vertex].s
    for k, x in enumerate(orbit.phase_points):
        if k == vertex:
            continue
        d = abs((x.s - s0 + L / 2) % L - L / 2)
        if d <= width / 2:
            raise SupportOverlap(f"vertex {k} at distance {d:.3g} lies in the support arc of width {width:.3g}")


def trace_response(
    table: Table, orbit: PeriodicOrbit, eps: float, width: float | None = None, vertex: int = 0
) -> TraceResponse:
    """Perturb kappa at the orbit vertex s0 by ``eps``, re-close the orbit and compare traces.

    ``b`` is the (0, 1) entry of the monodromy based at s0.  Reported residuals:
    ``shear_residual`` = |M_eps - [[1,0],[eps,1]] M| and ``two_sided_residual``
    = |M_eps - S M S| with the same shear S on both sides.
    """
    if width is None:
        width = table.length / 20.0
    _isolation_check(table, orbit, vertex, width)
    cfg = _rebased(orbit, vertex, table.length)
    base = orbit_from_config(table, cfg, kind=orbit.kind) if vertex else orbit
    s0 = base.phase_points[0].s
    M = base.monodromy
    if eps == 0.0:
        return TraceResponse(vertex, s0, 0.0, base.trace, base.trace, float(M[0, 1]), math.nan, math.nan, M, M, 0.0, 0.0, base, table)
    new_table = normal_perturbation(table, s0, eps, width)
    crit, res = _newton_polish(new_table, cfg)
    if res >= 1e-9:
        raise NoConvergence(f"orbit did not re-close after perturbation (|grad| = {res:.3g})")
    new_orbit = orbit_from_config(new_table, crit, kind=orbit.kind, residual=res)
    Me = new_orbit.monodromy
    S = np.array([[1.0, 0.0], [eps, 1.0]])
    b = float(M[0, 1])
    slope = (new_orbit.trace - base.trace) / eps
    return TraceResponse(
        vertex=vertex,
        s0=s0,
        eps=eps,
        tau=base.trace,
        tau_eps=new_orbit.trace,
        b=b,
        measured_slope=slope,
        relative_error=abs(slope - b) / abs(b) if b != 0 else math.inf,
        monodromy=M,
        monodromy_eps=Me,
        shear_residual=float(np.abs(Me - S @ M).max()),
        two_sided_residual=float(np.abs(Me - S @ M @ S).max()),
        orbit_eps=new_orbit,
        table_eps=new_table,
    )


def residual_order(table: Table, orbit: PeriodicOrbit, eps_pair=(1e-3, 5e-4), width=None, vertex=0) -> dict:
    """Fit the exponent of the shear-relation residual from two eps values."""
    r = [trace_response(table, orbit, e, width, vertex) for e in eps_pair]
    order = math.log(r[0].shear_residual / r[1].shear_residual) / math.log(eps_pair[0] / eps_pair[1])
    order2 = None
    if r[0].two_sided_residual > 0 and r[1].two_sided_residual > 0:
        order2 = math.log(r[0].two_sided_residual / r[1].two_sided_residual) / math.log(eps_pair[0] / eps_pair[1])
    return {
        "eps": list(eps_pair),
        "shear_residual": [x.shear_residual for x in r],
        "order": order,
        "two_sided_residual": [x.two_sided_residual for x in r],
        "two_sided_order": order2,
        "responses": r,
    }


def rotation_tune(
    table: Table,
    orbit: PeriodicOrbit,
    target_rho: float,
    width: float | None = None,
    vertex: int = 0,
    eps_budget: float = 0.05,
    tol: float = 1e-6,
    max_iter: int = 20,
) -> tuple[Table, PeriodicOrbit, float]:
    """Secant search on eps so that the perturbed orbit has rotation number ``target_rho``."""
    if orbit.classification != ELLIPTIC:
        raise NotElliptic(f"tau = {orbit.trace:.9g} is not elliptic")
    if not 0.0 < target_rho < 0.5:
        raise TargetUnreachable(f"target rotation number {target_rho} outside (0, 1/2)")
    target_tau = 2.0 * math.cos(2.0 * math.pi * target_rho)

    def residual(eps):
        if eps == 0.0:
            return orbit.trace - target_tau, table, orbit
        r = trace_response(table, orbit, eps, width, vertex)
        return r.tau_eps - target_tau, r.table_eps, r.orbit_eps

    e0, (f0, t0, o0) = 0.0, residual(0.0)
    if abs(f0) < 2 * tol:
        return table, orbit, 0.0
    b = float(orbit.monodromy[0, 1]) if vertex == 0 else None
    e1 = -f0 / (2.0 * b) if b else 1e-4
    if abs(e1) > eps_budget:
        e1 = math.copysign(eps_budget, e1)
    f1, t1, o1 = residual(e1)
    for _ in range(max_iter):
        if abs(f1) < 2 * tol and o1.classification == ELLIPTIC:
            return t1, o1, e1
        if f1 == f0:
            break
        e2 = e1 - f1 * (e1 - e0) / (f1 - f0)
        if abs(e2) > eps_budget:
            raise TargetUnreachable(f"required eps {e2:.3g} exceeds budget {eps_budget}")
        e0, f0 = e1, f1
        e1 = e2
        f1, t1, o1 = residual(e1)
    raise TargetUnreachable(f"secant search did not reach the target (residual {f1:.3g})")
