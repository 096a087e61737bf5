"""Stable and unstable branches of hyperbolic periodic points and their crossings.

Branches live on the universal cover of the phase cylinder, in the plane of
lifted (s, theta).  For a (p, q) orbit the return map is ``G = F^{2q}`` lifted
and shifted back by ``2 p L``; its eigenvalues at the base point are both
positive.  A branch is grown from a fundamental segment ``x0 + h0 lam^t v``,
``t in [0, 1)``: generation k is ``G^k`` (or ``G^-k`` for stable branches) of the
segment, and every polyline point remembers its (generation, t) so that it can
be recomputed or refined from the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .billiard import PhasePoint, billiard_map
from .errors import GrazingHit, NoHit, NotHyperbolic, SupportOverlap
from .orbits import HYPERBOLIC, PeriodicOrbit, _newton_polish, orbit_from_config
from .table import Table, normal_perturbation

UNSTABLE = "unstable"
STABLE = "stable"
PLUS = 1
MINUS = -1


@dataclass(frozen=True)
class HyperbolicFrame:
    lam: float
    v_u: np.ndarray
    v_s: np.ndarray
    matrix: np.ndarray
    residual: float


def hyperbolic_frame(table: Table, orbit: PeriodicOrbit) -> HyperbolicFrame:
    """Eigen-data of the doubled-period monodromy, lam > 1 along ``v_u``."""
    if orbit.classification != HYPERBOLIC:
        raise NotHyperbolic(f"orbit is {orbit.classification} (tau = {orbit.trace:.9g})")
    M = orbit.monodromy @ orbit.monodromy
    w, V = np.linalg.eig(M)
    if np.any(np.abs(np.imag(w)) > 0) or np.any(np.real(w) <= 0):
        raise NotHyperbolic(f"doubled monodromy eigenvalues {w}")
    w = np.real(w)
    V = np.real(V)
    iu = int(np.argmax(w))
    lam = float(w[iu])
    v_u = V[:, iu] / np.linalg.norm(V[:, iu])
    v_s = V[:, 1 - iu] / np.linalg.norm(V[:, 1 - iu])
    # orient both with increasing s
    v_u = v_u if v_u[0] >= 0 else -v_u
    v_s = v_s if v_s[0] >= 0 else -v_s
    res = max(np.linalg.norm(M @ v_u - lam * v_u), np.linalg.norm(M @ v_s - w[1 - iu] * v_s))
    return HyperbolicFrame(lam, v_u, v_s, M, float(res))


def return_map(table: Table, orbit: PeriodicOrbit, z: np.ndarray, forward: bool = True) -> np.ndarray:
    """G or G^-1 on the lifted plane; raises GrazingHit / NoHit."""
    L = table.length
    s, th = float(z[0]), float(z[1])
    if not 0.0 < th < math.pi:
        raise GrazingHit(f"branch left the phase cylinder (theta = {th:.3g})")
    pt = PhasePoint(s % L, th)
    shift = s - (s % L)
    total = 0.0
    for _ in range(2 * orbit.q):
        if forward:
            pt, rec = billiard_map(table, pt)
            total += rec.advance
        else:
            end, rec = billiard_map(table, pt.reversed())
            pt = end.reversed()
            # the reversed flight runs forward by adv, so the preimage sits L - adv behind
            total += rec.advance - L
    sign = 1.0 if forward else -1.0
    return np.array([s + total - sign * 2 * orbit.p * L, pt.theta])


@dataclass
class ManifoldBranch:
    """A traced branch as an ordered polyline in lifted (s, theta)."""

    kind: str
    side: int
    points: np.ndarray
    generation: np.ndarray
    param: np.ndarray
    eigenvalue: float
    h0: float
    direction: np.ndarray
    base_point: np.ndarray
    growth_generations: int
    complete: bool
    error: str | None = None
    generation_lengths: list[float] = field(default_factory=list)

    @property
    def polyline(self) -> list[PhasePoint]:
        return [PhasePoint(float(s), float(t)) for s, t in self.points]

    @property
    def arclength(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


class _Grower:
    def __init__(self, table, orbit, frame, kind, side, h0):
        self.table = table
        self.orbit = orbit
        self.forward = kind == UNSTABLE
        self.lam = frame.lam
        v = frame.v_u if self.forward else frame.v_s
        self.v = side * v
        x0 = orbit.phase_points[0]
        self.base = np.array([orbit.config.points[0], x0.theta])
        self.h0 = h0
        self.cache: dict[tuple[int, float], np.ndarray] = {}
        # linear correction so that seed(1) = G(seed(0)) exactly and generations join continuously
        z0 = self.base + h0 * self.v
        self.gap = return_map(table, orbit, z0, self.forward) - (self.base + h0 * self.lam * self.v)

    def seed(self, t: float) -> np.ndarray:
        return self.base + self.h0 * self.lam**t * self.v + t * self.gap

    def at(self, T: float) -> np.ndarray:
        """Point with global parameter T = generation + t."""
        gen = math.floor(T)
        t = T - gen
        if gen < 0:
            raise ValueError("negative branch parameter")
        return self.point(gen, t)

    def point(self, gen: int, t: float) -> np.ndarray:
        key = (gen, t)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if gen == 0:
            z = self.seed(t)
        else:
            z = return_map(self.table, self.orbit, self.point(gen - 1, t), self.forward)
        self.cache[key] = z
        return z


def _turning(a, b, c) -> float:
    u, w = b - a, c - b
    nu, nw = np.linalg.norm(u), np.linalg.norm(w)
    if nu == 0 or nw == 0:
        return 0.0
    return math.acos(max(-1.0, min(1.0, float(u @ w) / (nu * nw))))


def _refine_generation(grower: _Grower, gen: int, ts: list[float], max_spacing: float, max_turn: float, min_dt: float):
    """Insert parameters until spacing and turning bounds hold in generation ``gen``."""
    ts = list(ts)
    pts = [grower.point(gen, t) for t in ts]
    i = 0
    while i < len(ts) - 1:
        gap = np.linalg.norm(pts[i + 1] - pts[i])
        bend = _turning(pts[i - 1], pts[i], pts[i + 1]) if i > 0 else 0.0
        if (gap > max_spacing or bend > max_turn) and ts[i + 1] - ts[i] > min_dt:
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            pts.insert(i + 1, grower.point(gen, tm))
            if bend > max_turn and i > 0:
                i -= 1
            continue
        i += 1
    return ts, pts


def grow_branch(
    table: Table,
    orbit: PeriodicOrbit,
    kind: str,
    side: int,
    arc_budget: float,
    h0: float = 1e-5,
    max_spacing: float | None = None,
    max_turn_deg: float = 10.0,
    max_generations: int = 40,
    frame: HyperbolicFrame | None = None,
) -> ManifoldBranch:
    """Grow W^u (kind="unstable", map G) or W^s (kind="stable", map G^-1) on one side."""
    if kind not in (UNSTABLE, STABLE):
        raise ValueError(f"unknown branch kind {kind!r}")
    if side not in (PLUS, MINUS):
        raise ValueError("side must be +1 or -1")
    frame = frame or hyperbolic_frame(table, orbit)
    if max_spacing is None:
        max_spacing = 1e-3 * table.length
    grower = _Grower(table, orbit, frame, kind, side, h0)
    max_turn = math.radians(max_turn_deg)
    ts = list(np.linspace(0.0, 1.0, 9))
    pts_all: list[np.ndarray] = []
    T_all: list[float] = []
    lengths: list[float] = []
    total = 0.0
    error = None
    complete = False
    for gen in range(max_generations):
        try:
            ts, pts = _refine_generation(grower, gen, ts, max_spacing, max_turn, 1e-13)
        except (GrazingHit, NoHit) as exc:
            error = f"{type(exc).__name__}: {exc}"
            break
        lengths.append(float(np.linalg.norm(np.diff(np.array(pts), axis=0), axis=1).sum()))
        # the t = 1 point of this generation is the t = 0 point of the next
        for k in range(len(ts)):
            if pts_all:
                step = float(np.linalg.norm(pts[k] - pts_all[-1]))
                if step == 0.0:
                    continue
                if total + step > arc_budget:
                    complete = True
                    break
                total += step
            pts_all.append(pts[k])
            T_all.append(gen + ts[k])
        if complete:
            break
    T_arr = np.array(T_all)
    branch = ManifoldBranch(
        kind=kind,
        side=side,
        points=np.array(pts_all),
        generation=np.floor(T_arr).astype(int),
        param=T_arr,
        eigenvalue=frame.lam,
        h0=h0,
        direction=grower.v,
        base_point=grower.base,
        growth_generations=len(lengths),
        complete=complete,
        error=error,
        generation_lengths=lengths,
    )
    branch._grower = grower  # kept for exact refinement of crossings
    return branch


# -- crossings ----------------------------------------------------------------


@dataclass(frozen=True)
class Crossing:
    point: PhasePoint
    lifted: tuple[float, float]
    angle: float
    segments: tuple[int, int]
    sign: int
    shift: int
    tangent_u: tuple[float, float]
    tangent_s: tuple[float, float]
    refined: bool
    kinds: tuple[int, int] = (0, 0)

    @property
    def slope_u(self) -> float:
        return self.tangent_u[1] / self.tangent_u[0]

    @property
    def slope_s(self) -> float:
        return self.tangent_s[1] / self.tangent_s[0]


def _segment_hits(A: np.ndarray, B: np.ndarray):
    """All proper intersections between consecutive segments of polylines A and B."""
    a0, a1 = A[:-1], A[1:]
    b0, b1 = B[:-1], B[1:]
    out = []
    if len(a0) == 0 or len(b0) == 0:
        return out
    # bounding-box prefilter per chunk
    amin, amax = np.minimum(a0, a1), np.maximum(a0, a1)
    bmin, bmax = np.minimum(b0, b1), np.maximum(b0, b1)
    chunk = 512
    for i0 in range(0, len(a0), chunk):
        sl = slice(i0, i0 + chunk)
        ov = (
            (amin[sl, None, 0] <= bmax[None, :, 0])
            & (bmin[None, :, 0] <= amax[sl, None, 0])
            & (amin[sl, None, 1] <= bmax[None, :, 1])
            & (bmin[None, :, 1] <= amax[sl, None, 1])
        )
        ii, jj = np.nonzero(ov)
        if ii.size == 0:
            continue
        ii = ii + i0
        p, r = a0[ii], a1[ii] - a0[ii]
        qq, sv = b0[jj], b1[jj] - b0[jj]
        den = r[:, 0] * sv[:, 1] - r[:, 1] * sv[:, 0]
        ok = den != 0
        d = qq - p
        t = np.where(ok, (d[:, 0] * sv[:, 1] - d[:, 1] * sv[:, 0]) / np.where(ok, den, 1), -1)
        u = np.where(ok, (d[:, 0] * r[:, 1] - d[:, 1] * r[:, 0]) / np.where(ok, den, 1), -1)
        hit = ok & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
        for k in np.nonzero(hit)[0]:
            out.append((int(ii[k]), int(jj[k]), float(t[k]), float(u[k])))
    return out


def _refine_crossing(bu, bs, i, j, a, b, shift_vec, tol=1e-10, max_iter=30):
    """Solve u(T) = s(T') + shift for the global branch parameters with Newton on the exact map.

    Composed return maps carry round-off near 1e-12, so ``tol`` sits above that floor.
    """
    Tu = bu.param[i] + a * (bu.param[i + 1] - bu.param[i])
    Ts = bs.param[j] + b * (bs.param[j + 1] - bs.param[j])
    gu, gs = bu._grower, bs._grower
    d = 1e-7

    def tangents(Tu, Ts):
        ju = (gu.at(Tu + d) - gu.at(max(Tu - d, 0.0))) / (Tu + d - max(Tu - d, 0.0))
        js = (gs.at(Ts + d) - gs.at(max(Ts - d, 0.0))) / (Ts + d - max(Ts - d, 0.0))
        return ju, js

    for _ in range(max_iter):
        r = gu.at(Tu) - gs.at(Ts) - shift_vec
        if np.linalg.norm(r) < tol:
            break
        ju, js = tangents(Tu, Ts)
        try:
            step = np.linalg.solve(np.column_stack([ju, -js]), -r)
        except np.linalg.LinAlgError:
            return None
        if np.abs(step).max() > 0.05:
            return None
        Tu, Ts = Tu + step[0], Ts + step[1]
        if Tu < 0 or Ts < 0:
            return None
    else:
        return None
    ju, js = tangents(Tu, Ts)
    return gu.at(Tu), ju, js


def find_homoclinic(bs: ManifoldBranch, bu: ManifoldBranch, length: float, refine: bool = True) -> list[Crossing]:
    """Crossings of W^u with the deck translates W^s + kL; each verified on the exact map."""
    U, S = bu.points, bs.points
    if len(U) < 2 or len(S) < 2:
        return []
    kmin = math.floor((U[:, 0].min() - S[:, 0].max()) / length) - 1
    kmax = math.ceil((U[:, 0].max() - S[:, 0].min()) / length) + 1
    out: list[Crossing] = []
    for k in range(kmin, kmax + 1):
        shift = np.array([k * length, 0.0])
        for i, j, a, b in _segment_hits(U, S + shift):
            ru = U[i + 1] - U[i]
            rs = S[j + 1] - S[j]
            approx = U[i] + a * ru
            tu_vec, ts_vec, refined = ru, rs, False
            if refine:
                got = _refine_crossing(bu, bs, i, j, a, b, shift)
                if got is None:
                    continue
                approx, tu_vec, ts_vec = got
                refined = True
                if np.linalg.norm(approx - (U[i] + a * ru)) > 2 * max(np.linalg.norm(ru), np.linalg.norm(rs)) + 1e-9:
                    continue
            cross = float(tu_vec[0] * ts_vec[1] - tu_vec[1] * ts_vec[0])
            cosang = abs(float(tu_vec @ ts_vec)) / (np.linalg.norm(tu_vec) * np.linalg.norm(ts_vec))
            angle = math.acos(min(1.0, cosang))
            out.append(
                Crossing(
                    point=PhasePoint(float(approx[0] % length), float(approx[1])),
                    lifted=(float(approx[0]), float(approx[1])),
                    angle=angle,
                    segments=(i, j),
                    sign=1 if cross > 0 else -1,
                    shift=k,
                    tangent_u=(float(tu_vec[0]), float(tu_vec[1])),
                    tangent_s=(float(ts_vec[0]), float(ts_vec[1])),
                    refined=refined,
                    kinds=(bu.side, bs.side),
                )
            )
    out.sort(key=lambda c: (c.segments[0], c.segments[1]))
    return out


def loop_intersection_numbers(bu: ManifoldBranch, bs: ManifoldBranch, crossings: list[Crossing], length: float, levels=None) -> list[int]:
    """Signed intersection of closed loops W^u[z1, z2] + W^s[z2, z1] with horizontal lines.

    Consecutive crossings (along W^u) with the same deck shift bound a closed
    loop on the cover, so every count must be zero.
    """
    if levels is None:
        levels = np.linspace(0.05, math.pi - 0.05, 13)
    counts = []
    by_shift: dict[int, list[Crossing]] = {}
    for c in crossings:
        by_shift.setdefault(c.shift, []).append(c)
    for k, cs in sorted(by_shift.items()):
        cs = sorted(cs, key=lambda c: c.segments[0])
        S = bs.points + np.array([k * length, 0.0])
        for c1, c2 in zip(cs, cs[1:]):
            (i1, j1), (i2, j2) = c1.segments, c2.segments
            forward = bu.points[i1 + 1 : i2 + 1]
            back = S[j2:j1:-1] if j2 > j1 else S[j2 + 1 : j1 + 1]
            loop = np.vstack([[c1.lifted], forward, [c2.lifted], back.reshape(-1, 2), [c1.lifted]])
            for lev in levels:
                y = loop[:, 1] - lev
                lo, hi = y[:-1], y[1:]
                counts.append(int(np.sum((lo < 0) & (hi >= 0)) - np.sum((lo >= 0) & (hi < 0))))
    return counts


@dataclass
class EntropyCertificate:
    applicable: bool
    found: bool
    message: str
    crossing: Crossing | None = None
    crossings: list[Crossing] = field(default_factory=list)
    branches: dict = field(default_factory=dict)
    eigenvalue: float | None = None


def entropy_certificate(
    table: Table,
    orbit: PeriodicOrbit,
    budget: float,
    h0: float = 1e-5,
    min_angle: float = 1e-4,
    max_spacing: float | None = None,
) -> EntropyCertificate:
    """Grow all four branches and report the most transverse homoclinic crossing."""
    try:
        frame = hyperbolic_frame(table, orbit)
    except NotHyperbolic as exc:
        return EntropyCertificate(False, False, f"not applicable: {exc}")
    branches = {}
    for kind in (UNSTABLE, STABLE):
        for side in (PLUS, MINUS):
            branches[kind, side] = grow_branch(table, orbit, kind, side, budget, h0=h0, frame=frame, max_spacing=max_spacing)
    crossings: list[Crossing] = []
    for su in (PLUS, MINUS):
        for ss in (PLUS, MINUS):
            crossings += find_homoclinic(branches[STABLE, ss], branches[UNSTABLE, su], table.length)
    good = [c for c in crossings if c.angle > min_angle and c.refined]
    if not good:
        return EntropyCertificate(True, False, "none found within budget", None, crossings, branches, frame.lam)
    best = max(good, key=lambda c: c.angle)
    msg = f"transverse homoclinic point at (s, theta) = ({best.point.s:.9g}, {best.point.theta:.9g}), angle {best.angle:.6g}"
    return EntropyCertificate(True, True, msg, best, crossings, branches, frame.lam)


@dataclass
class TangencyReport:
    eps: float
    s0: float
    angle_before: float
    angle_after: float
    slope_gap_before: float
    slope_gap_after: float
    table: Table
    crossing_after: Crossing | None


def tangency_break(
    table: Table,
    orbit: PeriodicOrbit,
    crossing: Crossing,
    eps: float,
    budget: float,
    width: float | None = None,
    h0: float = 1e-5,
) -> TangencyReport:
    """Perturb kappa by ``eps`` at the crossing's reflection point and re-detect the crossing.

    The slope gap is m_u - m_s at the crossing, in (s, theta) coordinates.
    """
    gap0 = crossing.slope_u - crossing.slope_s
    if eps == 0.0:
        return TangencyReport(0.0, crossing.point.s, crossing.angle, crossing.angle, gap0, gap0, table, crossing)
    if width is None:
        width = table.length / 40.0
    s0 = crossing.point.s
    L = table.length
    for x in orbit.phase_points:
        if abs((x.s - s0 + L / 2) % L - L / 2) <= width / 2:
            raise SupportOverlap(f"orbit vertex at s = {x.s:.6g} inside the perturbation support")
    new_table = normal_perturbation(table, s0, eps, width)
    cfg, res = _newton_polish(new_table, orbit.config)
    new_orbit = orbit_from_config(new_table, cfg, kind=orbit.kind, residual=res)
    frame = hyperbolic_frame(new_table, new_orbit)
    su, ss = crossing.kinds
    bu = grow_branch(new_table, new_orbit, UNSTABLE, su, budget, h0=h0, frame=frame)
    bs = grow_branch(new_table, new_orbit, STABLE, ss, budget, h0=h0, frame=frame)
    found = find_homoclinic(bs, bu, L)
    target = np.array(crossing.lifted)
    best = min(found, key=lambda c: np.linalg.norm(np.array(c.lifted) - target), default=None)
    if best is None or np.linalg.norm(np.array(best.lifted) - target) > 1e-2:
        return TangencyReport(eps, s0, crossing.angle, math.nan, gap0, math.nan, new_table, None)
    return TangencyReport(eps, s0, crossing.angle, best.angle, gap0, best.slope_u - best.slope_s, new_table, best)
