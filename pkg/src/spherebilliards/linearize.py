"""Tangent map of the billiard through Jacobi fields and the mirror formula.

A variation (ds, dtheta) of the outgoing phase point is a Jacobi field along the
chord with normal component and derivative

    J  = -sin(theta) ds,     J' = dtheta + kappa ds

(normal taken as the velocity rotated by +90 degrees).  It is transported by
J'' + K J = 0 and reflected by

    (J, J') -> (-J, -J' + 2 kappa J / sin(theta)),

whose ratio form is B+ = B- - 2 kappa / sin(theta) for B = J'/J.  Reading the
reflected field back with the departure convention gives DF.  Consequently the
slope of a front in (s, theta) is ``m = -B sin(theta) - kappa``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .billiard import ChordRecord, PhasePoint, billiard_map
from .geometry import GeodesicState, JacobiState, Metric, first_zero
from .table import Table, curvature_at


@dataclass(frozen=True)
class Wavefront:
    """A front through the boundary point ``s`` at angle ``theta``, stored projectively.

    ``base`` is the geodesic carrying the front; it is only needed for focusing
    times on a non-round metric.
    """

    jacobi: JacobiState
    theta: float
    s: float = 0.0
    kappa: float = 0.0
    base: GeodesicState | None = None

    @property
    def curvature(self) -> float:
        """B = J'/J; +-inf when J = 0."""
        J, dJ = self.jacobi.value, self.jacobi.derivative
        if J == 0.0:
            return math.copysign(math.inf, dJ) if dJ != 0.0 else math.nan
        return dJ / J

    @property
    def slope(self) -> float:
        """dtheta/ds of the corresponding curve in phase space."""
        return slope_from_curvature(self.curvature, self.theta, self.kappa)

    @classmethod
    def from_phase_vector(cls, table: Table, x: PhasePoint, v, base: GeodesicState | None = None) -> "Wavefront":
        """Front generated by the phase-space direction ``v = (ds, dtheta)`` at ``x``."""
        kappa = curvature_at(table, x.s)
        J, dJ = departure_matrix(x.theta, kappa) @ np.asarray(v, dtype=float)
        return cls(JacobiState(float(J), float(dJ)), x.theta, x.s, kappa, base)

    def phase_vector(self) -> np.ndarray:
        """Inverse of ``from_phase_vector``."""
        return np.linalg.solve(departure_matrix(self.theta, self.kappa), self.jacobi.as_array())


def slope_from_curvature(B: float, theta: float, kappa: float) -> float:
    return -B * math.sin(theta) - kappa


def curvature_from_slope(m: float, theta: float, kappa: float) -> float:
    return -(m + kappa) / math.sin(theta)


def departure_matrix(theta: float, kappa: float) -> np.ndarray:
    """(ds, dtheta) at an outgoing phase point -> (J, J') at the start of the chord."""
    return np.array([[-math.sin(theta), 0.0], [kappa, 1.0]])


def arrival_matrix(theta1: float, kappa1: float) -> np.ndarray:
    """(J, J') at the end of a chord -> (ds1, dtheta1) of the post-reflection phase point."""
    s = math.sin(theta1)
    return np.array([[1.0 / s, 0.0], [kappa1 / s, -1.0]])


def mirror_matrix(theta: float, kappa: float) -> np.ndarray:
    """Projective mirror formula acting on (J, J')."""
    return np.array([[-1.0, 0.0], [2.0 * kappa / math.sin(theta), -1.0]])


def reflect_wavefront(table: Table, w: Wavefront, s1: float, theta1: float) -> Wavefront:
    """Apply the mirror formula at Gamma(s1): shear J' by -2 kappa J / sin(theta1), then flip signs."""
    kappa = curvature_at(table, s1)
    J, dJ = mirror_matrix(theta1, kappa) @ w.jacobi.as_array()
    return Wavefront(JacobiState(float(J), float(dJ)), theta1, s1, kappa)


@dataclass(frozen=True)
class TangentMap:
    """2x2 matrix acting on (ds, dtheta)."""

    entries: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))

    def __matmul__(self, other: "TangentMap") -> "TangentMap":
        return TangentMap(self.entries @ other.entries)


def step_tangent(table: Table, x: PhasePoint, chord: ChordRecord) -> TangentMap:
    """DF at ``x``: both basis fronts are transported along the flight and reflected."""
    kappa0 = curvature_at(table, x.s)
    kappa1 = curvature_at(table, chord.end.s)
    theta1 = chord.end.theta
    cols = []
    for e in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        J = chord.jacobi @ (departure_matrix(x.theta, kappa0) @ e)
        front = Wavefront(JacobiState(float(J[0]), float(J[1])), theta1, chord.end.s, kappa1)
        out = reflect_wavefront(table, front, chord.end.s, theta1)
        cols.append(out.phase_vector())
    return TangentMap(np.column_stack(cols))


def tangent_at(table: Table, x: PhasePoint) -> tuple[PhasePoint, TangentMap]:
    y, chord = billiard_map(table, x)
    return y, step_tangent(table, x, chord)


def monodromy(table: Table, orbit: list[PhasePoint], closure_tol: float = 1e-7) -> TangentMap:
    """Product of single-step tangent maps along a closed orbit ``(x_0, ..., x_{n-1})``."""
    M = TangentMap(np.eye(2))
    x = orbit[0]
    for _ in range(len(orbit)):
        y, chord = billiard_map(table, x)
        M = step_tangent(table, x, chord) @ M
        x = y
    miss_s = abs((x.s - orbit[0].s + table.length / 2) % table.length - table.length / 2)
    if max(miss_s, abs(x.theta - orbit[0].theta)) > closure_tol:
        raise ValueError(f"orbit does not close: miss ({miss_s:.3g}, {x.theta - orbit[0].theta:.3g})")
    return M


def focusing_time(metric: Metric, w: Wavefront, horizon: float = 2 * math.pi) -> float | None:
    """f = min{t >= 0 : J(t) = 0}; zero when J(0) = 0."""
    if w.jacobi.value == 0.0:
        return 0.0
    if metric.is_round:
        start = GeodesicState(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    elif w.base is None:
        raise ValueError("focusing on a non-round metric needs the front's base geodesic")
    else:
        start = w.base
    return first_zero(metric, start, w.jacobi, horizon)


def backward_focusing_time(metric: Metric, w: Wavefront, horizon: float = 2 * math.pi) -> float | None:
    """f-hat: first zero of J going backward, i.e. of the reversed front along the reversed geodesic."""
    base = None
    if w.base is not None:
        base = GeodesicState(w.base.point, -w.base.direction)
    rev = Wavefront(JacobiState(w.jacobi.value, -w.jacobi.derivative), w.theta, w.s, w.kappa, base)
    return focusing_time(metric, rev, horizon)


def round_sphere_front_evolution(alpha0: float, t: float) -> float:
    """B_t = cot(alpha0 + t) for the front with B_0 = cot(alpha0) on the round sphere."""
    return math.cos(alpha0 + t) / math.sin(alpha0 + t)
