"""Phase portraits: iterate a grid of initial points and render layers to SVG."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .billiard import PhasePoint, iterate
from .drivers import fan_out
from .orbits import delta_star
from .svg import BRANCH_COLORS, CLASS_COLORS, Canvas
from .table import Table


@dataclass(frozen=True)
class Portrait:
    starts: tuple[PhasePoint, ...]
    bounces: int
    s: np.ndarray
    theta: np.ndarray


def grid_starts(table: Table, n: int, seed: int) -> list[list[PhasePoint]]:
    """n x n cell-centred grid with a seeded jitter of at most a quarter cell; one list per row."""
    if n <= 0:
        return []
    rng = np.random.default_rng(seed)
    ds, dth = table.length / n, math.pi / n
    rows = []
    for i in range(n):
        row = []
        jit = rng.uniform(-0.25, 0.25, size=(n, 2))
        for j in range(n):
            s = (j + 0.5 + jit[j, 0]) * ds
            th = (i + 0.5 + jit[j, 1]) * dth
            row.append(PhasePoint(float(s), float(th)))
        rows.append(row)
    return rows


def _row_task(args):
    table, row, bounces, theta_min = args
    s, th = [], []
    for x in row:
        seg = iterate(table, x, bounces, theta_min)
        s.extend(p.s for p in seg.points)
        th.extend(p.theta for p in seg.points)
    return np.array(s), np.array(th)


def compute_portrait(table: Table, grid: int, bounces: int, seed: int, workers: int = 1, theta_min: float = 1e-4) -> Portrait:
    rows = grid_starts(table, grid, seed)
    parts = fan_out(_row_task, [(table, r, bounces, theta_min) for r in rows], workers)
    s = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    th = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
    return Portrait(tuple(x for r in rows for x in r), bounces, s, th)


def render_portrait(
    table: Table,
    portrait: Portrait | None,
    orbits: list[dict] = (),
    branches: list[dict] = (),
    crossings: list[dict] = (),
    annulus_periods=(),
    width: int = 900,
    height: int = 450,
    annulus_samples: int = 1000,
    title: str = "phase portrait",
) -> str:
    """SVG with whichever layers are supplied; each layer gets a legend entry."""
    c = Canvas(table.length, width, height)
    c.axes()
    if portrait is not None and len(portrait.s):
        c.dots(portrait.s, portrait.theta, "#333333", "iterates")
    if annulus_periods:
        ds = delta_star(table, annulus_samples)
        for n in sorted(set(annulus_periods)):
            d = min(ds, table.total_curvature / (2.0 * n))
            c.hline(d, "#9467bd", f"M_{n} boundary")
            c.hline(math.pi - d, "#9467bd", f"M_{n} boundary")
    for b in branches:
        c.polyline(np.asarray(b["points"], dtype=float), BRANCH_COLORS[b["kind"]], f"{b['kind']} branch")
    for o in orbits:
        col = CLASS_COLORS.get(o["class"], "#7f7f7f")
        c.markers(o["s"], o["theta"], col, f"{o['class']} orbit")
    if crossings:
        c.markers([x["s"] for x in crossings], [x["theta"] for x in crossings], "#ff7f0e", "homoclinic crossing", r=3.0)
    return c.render(title)
