"""Strictly convex billiard tables as radial graphs over a center.

The boundary is ``Gamma(psi) = cos r(psi) c + sin r(psi) (cos psi e1 + sin psi e2)``
in round polar coordinates about the center ``c``; ``r`` is a finite Fourier
series plus compactly supported bumps added by the local perturbations.  All
metric quantities (arclength, geodesic curvature, Gauss-Bonnet integrals) are
taken in ``g``.  Arclength uses composite 16-point Gauss-Legendre panels, so
``s <-> psi`` conversions are accurate to rounding.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConjugateRisk, NotConvex, NotSimple, SupportOverlap, TableInvariantError
from .geometry import GeodesicState, Metric, geodesic_step, normalize

TWO_PI = 2.0 * math.pi
KAPPA_MIN = 1e-4
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
# values at the Gauss nodes -> Legendre coefficients (exact interpolation)
_LEG_FROM_NODES = np.linalg.inv(np.polynomial.legendre.legvander(_GL_X, 15))


def _legval(x: float, c: list[float]) -> float:
    """Legendre series by upward recurrence; stable on [-1, 1]."""
    p0, p1 = 1.0, x
    acc = c[0] + c[1] * x
    for k in range(1, len(c) - 1):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
        acc += c[k + 1] * p1
    return acc


def _bump(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """exp(1 - 1/(1 - v^2)) on |v| < 1 with first and second derivatives; b(0) = 1."""
    v = np.asarray(v, dtype=float)
    inside = np.abs(v) < 1.0
    vi = np.where(inside, v, 0.0)
    q = 1.0 - vi * vi
    b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    g1 = -2.0 * vi / q**2
    g2 = -2.0 / q**2 - 8.0 * vi * vi / q**3
    return b, b * g1, b * (g1 * g1 + g2)


def wrap_angle(a):
    """Map to (-pi, pi]."""
    return np.mod(np.asarray(a) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class Bump:
    """``(value + slope u + curvature u^2 / 2) * b(u / halfwidth)`` with ``u = psi - psi0``."""

    psi0: float
    halfwidth: float
    value: float = 0.0
    slope: float = 0.0
    curvature: float = 0.0

    def evaluate(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = wrap_angle(psi - self.psi0)
        h = self.halfwidth
        b, b1, b2 = _bump(u / h)
        b1 = b1 / h
        b2 = b2 / (h * h)
        p = self.value + self.slope * u + 0.5 * self.curvature * u * u
        p1 = self.slope + self.curvature * u
        p2 = self.curvature
        return p * b, p1 * b + p * b1, p2 * b + 2 * p1 * b1 + p * b2

    def at(self, psi: float) -> float:
        u = (psi - self.psi0 + math.pi) % TWO_PI - math.pi
        v = u / self.halfwidth
        if abs(v) >= 1.0:
            return 0.0
        return (self.value + self.slope * u + 0.5 * self.curvature * u * u) * math.exp(1.0 - 1.0 / (1.0 - v * v))


def _frame(center: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([1.0, 0.0, 0.0]) if abs(center[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = normalize(ref - np.dot(ref, center) * center)
    return e1, np.cross(center, e1)


class Table:
    """Boundary Gamma of a strictly convex domain Q, arclength-parametrized in g.

    Construction validates the table invariants (simple, strictly convex,
    diameter below the injectivity bound, Gauss-Bonnet) unless ``validate`` is
    false.  ``anchor = (psi_a, s_a)`` fixes the arclength origin: the point at
    angle ``psi_a`` carries label ``s_a``.
    """

    def __init__(
        self,
        metric: Metric,
        center,
        radius: float,
        fourier=(),
        bumps: tuple[Bump, ...] = (),
        anchor: tuple[float, float] = (0.0, 0.0),
        panels: int = 512,
        validate: bool = True,
        kappa_min: float = KAPPA_MIN,
    ):
        self.metric = metric
        self.center = normalize(center)
        self.radius = float(radius)
        self.fourier = tuple((int(k), float(a), float(b)) for k, a, b in fourier)
        self.bumps = tuple(bumps)
        self.anchor = (float(anchor[0]), float(anchor[1]))
        self.panels = int(panels)
        self.kappa_min_threshold = kappa_min
        self.e1, self.e2 = _frame(self.center)
        self._basis = np.array([self.center, self.e1, self.e2])

        edges = np.linspace(0.0, TWO_PI, self.panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        mids = 0.5 * (edges[:-1] + edges[1:])
        self._edges = edges
        self._nodes = (mids[:, None] + half * _GL_X[None, :]).ravel()
        self._weights = np.tile(half * _GL_W, self.panels)
        sig = self.speed(self._nodes)
        # per panel: s(psi) - s(edge) = half * sum_k I_k P_k(x), x the local coordinate
        coef = (_LEG_FROM_NODES @ sig.reshape(self.panels, -1).T).T
        integ = np.polynomial.legendre.legint(coef, lbnd=-1, axis=1) * half
        self._half = half
        self._mids = mids
        self._speed_coef = [row.tolist() for row in coef]
        self._int_coef = [row.tolist() for row in integ]
        panel_len = (sig * self._weights).reshape(self.panels, -1).sum(axis=1)
        self._cum = np.concatenate([[0.0], np.cumsum(panel_len)])
        self._cum_list = self._cum.tolist()
        self.length = float(self._cum[-1])
        self._node_s = (self._cum[:-1, None] + np.polynomial.legendre.legval(_GL_X, integ.T)).ravel()
        self._offset = self.anchor[1] - self._raw_s(self.anchor[0])

        kap = self.curvature_psi(self._nodes)
        self._kappa_nodes = kap
        self.total_curvature = float(np.sum(kap * sig * self._weights))
        self.kappa_min = float(kap.min())
        self.kappa_max = float(kap.max())
        self.area_curvature = self._area_curvature()
        self.gauss_bonnet_residual = self.area_curvature + self.total_curvature - TWO_PI
        self.diameter = self._diameter_bound()
        if validate:
            self.validate()

    # -- construction helpers -------------------------------------------------

    def replace(self, **changes) -> "Table":
        kw = dict(
            metric=self.metric,
            center=self.center,
            radius=self.radius,
            fourier=self.fourier,
            bumps=self.bumps,
            anchor=self.anchor,
            panels=self.panels,
            kappa_min=self.kappa_min_threshold,
        )
        kw.update(changes)
        return Table(**kw)

    def validate(self) -> None:
        r = self.profile(self._nodes)[0]
        if r.min() <= 0.0 or r.max() >= math.pi:
            i = int(np.argmin(r) if r.min() <= 0.0 else np.argmax(r))
            raise NotSimple(f"radial profile {r[i]:.6g} leaves (0, pi) at psi = {self._nodes[i]:.6f}")
        if self.kappa_min < self.kappa_min_threshold:
            i = int(np.argmin(self._kappa_nodes))
            raise NotConvex(
                f"geodesic curvature {self.kappa_min:.6g} < {self.kappa_min_threshold} "
                f"at s = {self.s_of_psi(self._nodes[i]):.6f}"
            )
        if self.diameter >= self.metric.injectivity_bound:
            raise ConjugateRisk(f"diameter {self.diameter:.6g} >= injectivity bound {self.metric.injectivity_bound:.6g}")
        if abs(self.gauss_bonnet_residual) > 1e-6:
            raise TableInvariantError(f"Gauss-Bonnet residual {self.gauss_bonnet_residual:.3g}")

    # -- boundary geometry in psi --------------------------------------------

    def profile(self, psi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """r, r', r'' at angles ``psi``."""
        psi = np.asarray(psi, dtype=float)
        r = np.full(psi.shape, self.radius)
        r1 = np.zeros(psi.shape)
        r2 = np.zeros(psi.shape)
        for k, a, b in self.fourier:
            c, s = np.cos(k * psi), np.sin(k * psi)
            r = r + a * c + b * s
            r1 = r1 + k * (b * c - a * s)
            r2 = r2 - k * k * (a * c + b * s)
        for bump in self.bumps:
            d0, d1, d2 = bump.evaluate(psi)
            r, r1, r2 = r + d0, r1 + d1, r2 + d2
        return r, r1, r2

    def _polar(self, r, psi):
        E = np.multiply.outer(np.cos(psi), self.e1) + np.multiply.outer(np.sin(psi), self.e2)
        F = np.multiply.outer(-np.sin(psi), self.e1) + np.multiply.outer(np.cos(psi), self.e2)
        cr, sr = np.cos(r)[..., None], np.sin(r)[..., None]
        x = cr * self.center + sr * E
        x_r = -sr * self.center + cr * E
        return x, x_r, E, F, cr, sr

    def embed(self, psi):
        """x, x', x'', and d x / d r at ``psi``; shapes (..., 3)."""
        psi = np.asarray(psi, dtype=float)
        r, r1, r2 = self.profile(psi)
        x, x_r, E, F, cr, sr = self._polar(r, psi)
        r1_, r2_ = r1[..., None], r2[..., None]
        d1 = r1_ * x_r + sr * F
        d2 = r2_ * x_r - r1_ * r1_ * x + 2 * r1_ * cr * F - sr * E
        return x, d1, d2, x_r

    def speed(self, psi) -> np.ndarray:
        """g-arclength per radian of psi."""
        x, d1, _, _ = self.embed(psi)
        sp = np.linalg.norm(d1, axis=-1)
        if self.metric.is_round:
            return sp
        return sp * self.metric.conformal_factor(x.reshape(-1, 3)).reshape(sp.shape)

    def curvature_psi(self, psi) -> np.ndarray:
        """Geodesic curvature in g: exp(-phi) (kappa_round - d phi / dN), N inward."""
        psi = np.asarray(psi, dtype=float)
        x, d1, d2, _ = self.embed(psi)
        sp = np.linalg.norm(d1, axis=-1)
        k0 = np.einsum("...i,...i->...", np.cross(x, d1), d2) / sp**3
        if self.metric.is_round:
            return k0
        flat = x.reshape(-1, 3)
        T = (d1 / sp[..., None]).reshape(-1, 3)
        N = np.cross(flat, T)
        ev = self.metric.phi.evaluate(flat)
        dphi_n = np.einsum("ij,ij->i", ev[1:4].T, N)
        return (np.exp(-ev[0]) * (k0.reshape(-1) - dphi_n)).reshape(k0.shape)

    # -- arclength ------------------------------------------------------------

    def _raw_s(self, psi: float) -> float:
        """Arclength from psi = 0 to ``psi`` in [0, 2 pi]."""
        j = min(int(psi / TWO_PI * self.panels), self.panels - 1)
        x = (psi - self._mids[j]) / self._half
        return self._cum_list[j] + _legval(x, self._int_coef[j])

    def s_of_psi(self, psi: float) -> float:
        return float((self._raw_s(float(psi) % TWO_PI) + self._offset) % self.length)

    def psi_of_s(self, s: float) -> float:
        raw = (float(s) - self._offset) % self.length
        j = bisect_right(self._cum_list, raw) - 1
        j = min(max(j, 0), self.panels - 1)
        target = raw - self._cum_list[j]
        ci, cs = self._int_coef[j], self._speed_coef[j]
        half = self._half
        x = 2.0 * (raw - self._cum_list[j]) / (self._cum_list[j + 1] - self._cum_list[j]) - 1.0
        for _ in range(12):
            step = (_legval(x, ci) - target) / (half * _legval(x, cs))
            x -= step
            if abs(step) < 1e-15:
                break
        return float((self._mids[j] + self._half * x) % TWO_PI)

    def wrap(self, s):
        return np.mod(s, self.length)

    # -- boundary geometry in s -----------------------------------------------

    def frame_psi(self, psi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Point, unit tangent and inward unit normal (ambient, round-unit)."""
        r, r1 = self.radius_slope_at(psi)
        cr, sr = math.cos(r), math.sin(r)
        cp, sp = math.cos(psi), math.sin(psi)
        # components in the right-handed frame (c, e1, e2)
        x = (cr, sr * cp, sr * sp)
        d = (-r1 * sr, r1 * cr * cp - sr * sp, r1 * cr * sp + sr * cp)
        nd = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        T = (d[0] / nd, d[1] / nd, d[2] / nd)
        N = (x[1] * T[2] - x[2] * T[1], x[2] * T[0] - x[0] * T[2], x[0] * T[1] - x[1] * T[0])
        out = np.array((x, T, N)) @ self._basis
        return out[0], out[1], out[2]

    def frame(self, s: float):
        return self.frame_psi(self.psi_of_s(s))

    def point(self, s: float) -> np.ndarray:
        return self.frame(s)[0]

    def radius_at(self, psi: float) -> float:
        """r(psi) for a scalar angle, without array overhead."""
        r = self.radius
        for k, a, b in self.fourier:
            r += a * math.cos(k * psi) + b * math.sin(k * psi)
        for bump in self.bumps:
            r += bump.at(psi)
        return r

    def radius_slope_at(self, psi: float) -> tuple[float, float]:
        r, r1 = self.radius, 0.0
        for k, a, b in self.fourier:
            c, s = math.cos(k * psi), math.sin(k * psi)
            r += a * c + b * s
            r1 += k * (b * c - a * s)
        for bump in self.bumps:
            if bump.at(psi) != 0.0:
                d0, d1, _ = bump.evaluate(np.array(psi))
                r += float(d0)
                r1 += float(d1)
        return r, r1

    def inside_components(self, a0: float, a1: float, a2: float) -> float:
        """``inside`` for the point with components (a0, a1, a2) in the frame (c, e1, e2)."""
        return math.atan2(math.hypot(a1, a2), a0) - self.radius_at(math.atan2(a2, a1))

    def inside(self, x: np.ndarray) -> float:
        """Signed radial offset: negative inside Q, zero on Gamma."""
        return self.inside_components(float(self.center @ x), float(self.e1 @ x), float(self.e2 @ x))

    def polar(self, x: np.ndarray) -> tuple[float, float]:
        a0, a1, a2 = float(self.center @ x), float(self.e1 @ x), float(self.e2 @ x)
        return math.atan2(math.hypot(a1, a2), a0), math.atan2(a2, a1) % TWO_PI

    def kappa_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (s, kappa) samples at the quadrature nodes, sorted by s."""
        s = np.mod(self._node_s + self._offset, self.length)
        order = np.argsort(s)
        return s[order], self._kappa_nodes[order]

    # -- integrals ------------------------------------------------------------

    def _area_curvature(self) -> float:
        """Integral of K over Q in g (equals the round integral of 1 - Lap phi)."""
        r = self.profile(self._nodes)[0]
        if self.metric.is_round:
            return float(np.sum((1.0 - np.cos(r)) * self._weights))
        step = max(1, self.panels // 128)
        sel = slice(None, None, step)
        psi, w_psi = self._nodes.reshape(self.panels, -1)[sel].ravel(), self._weights.reshape(self.panels, -1)[sel].ravel() * step
        r = self.profile(psi)[0]
        rho_x, rho_w = np.polynomial.legendre.leggauss(32)
        rho = 0.5 * r[:, None] * (rho_x[None, :] + 1.0)
        wr = 0.5 * r[:, None] * rho_w[None, :]
        x = self._polar(rho, np.broadcast_to(psi[:, None], rho.shape))[0]
        lap = self.metric.phi.evaluate(x.reshape(-1, 3))[4].reshape(rho.shape)
        return float(np.sum((1.0 - lap) * np.sin(rho) * wr * w_psi[:, None]))

    def _diameter_bound(self, n: int = 720) -> float:
        psi = np.linspace(0.0, TWO_PI, n, endpoint=False)
        x = self.embed(psi)[0]
        G = np.clip(x @ x.T, -1.0, 1.0)
        d0 = float(np.arccos(G.min()))
        # sample spacing slack
        gap = float(np.max(np.linalg.norm(np.diff(np.vstack([x, x[:1]]), axis=0), axis=1)))
        d0 = min(d0 + gap, math.pi)
        if self.metric.is_round:
            return d0
        r = self.profile(psi)[0]
        grid = np.linspace(0.0, 1.0, 12)
        pts = self._polar(np.multiply.outer(r, grid), np.broadcast_to(psi[:, None], (n, 12)))[0].reshape(-1, 3)
        return d0 * float(self.metric.conformal_factor(pts).max())

    def __repr__(self) -> str:
        return (
            f"Table(kind={self.metric.kind}, radius={self.radius:.6g}, fourier={self.fourier}, "
            f"bumps={len(self.bumps)}, L={self.length:.9g})"
        )


def build_table(metric: Metric, center, fourier_coeffs, radius: float | None = None, **kw) -> Table:
    """Table from a constant radius plus ``(k, a_k, b_k)`` Fourier modes.

    ``fourier_coeffs`` may also start with the k = 0 mode, which then supplies
    the radius.
    """
    modes = [tuple(m) for m in fourier_coeffs]
    base = radius
    rest = []
    for k, a, b in modes:
        if int(k) == 0:
            base = (base or 0.0) + float(a)
        else:
            rest.append((k, a, b))
    if base is None:
        raise ValueError("table radius missing")
    return Table(metric, center, base, tuple(rest), **kw)


def curvature_at(table: Table, s: float) -> float:
    return float(table.curvature_psi(table.psi_of_s(s % table.length)))


def _support_halfwidth(table: Table, s0: float, width: float) -> float:
    if not 0.0 < width < table.length / 4.0:
        raise SupportOverlap(f"width {width:.6g} must lie in (0, L/4 = {table.length / 4:.6g})")
    psi0 = table.psi_of_s(s0)
    lo = table.psi_of_s(s0 - width / 2.0)
    hi = table.psi_of_s(s0 + width / 2.0)
    return float(min(wrap_angle(psi0 - lo), wrap_angle(hi - psi0)))


def normal_perturbation(table: Table, s0: float, eps: float, width: float | None = None) -> Table:
    """Bump the boundary near ``s0`` keeping position and tangent there, shifting kappa(s0) by ``eps``.

    The radial profile gets ``C u^2/2 * b(u/h)``; with r and r' fixed at psi0 the
    curvature is affine in r'' so C is exact.  Labels are re-anchored so the
    point keeps arclength ``s0``.
    """
    if eps == 0.0:
        return table
    if width is None:
        width = table.length / 20.0
    s0 = s0 % table.length
    psi0 = table.psi_of_s(s0)
    h = _support_halfwidth(table, s0, width)
    x, d1, _, x_r = table.embed(psi0)
    sp = np.linalg.norm(d1)
    sens = float(np.dot(np.cross(x, d1), x_r)) / sp**3
    factor = float(table.metric.conformal_factor(x))
    C = eps * factor / sens
    out = table.replace(bumps=table.bumps + (Bump(psi0, h, curvature=C),), anchor=(psi0, s0))
    return out


def normal_shift(table: Table, s0: float, delta: float, width: float | None = None) -> Table:
    """Move Gamma(s0) by ``delta`` along the inward normal geodesic, tangent parallel-transported.

    The moved point keeps arclength label ``s0``.
    """
    if delta == 0.0:
        return table
    if width is None:
        width = table.length / 20.0
    s0 = s0 % table.length
    h = _support_halfwidth(table, s0, width)
    x, T, N = table.frame(s0)
    m = table.metric
    direction = N if delta > 0 else -N
    end = geodesic_step(m, GeodesicState.make(m, x, direction), abs(delta))
    y = end.point
    u = normalize(end.direction)
    # a vector normal to the geodesic stays normal under parallel transport
    T1 = np.cross(u, y) if delta > 0 else np.cross(y, u)
    rho, psi1 = table.polar(y)
    E = np.cos(psi1) * table.e1 + np.sin(psi1) * table.e2
    F = -np.sin(psi1) * table.e1 + np.cos(psi1) * table.e2
    x_r = -math.sin(rho) * table.center + math.cos(rho) * E
    slope = math.sin(rho) * float(np.dot(T1, x_r)) / float(np.dot(T1, F))
    r, r1, _ = table.profile(psi1)
    bump = Bump(psi1, h, value=float(rho - r), slope=float(slope - r1))
    return table.replace(bumps=table.bumps + (bump,), anchor=(psi1, s0))


def apply_perturbations(table: Table, perturbations) -> Table:
    """Apply ``{kind, s0, eps|delta, width}`` records in order."""
    for p in perturbations:
        kind = p["kind"]
        width = p.get("width")
        if kind in ("curvature", "normal_perturbation"):
            table = normal_perturbation(table, p["s0"], p["eps"], width)
        elif kind in ("shift", "normal_shift"):
            table = normal_shift(table, p["s0"], p["delta"], width)
        else:
            raise ValueError(f"unknown perturbation kind {kind!r}")
    return table
