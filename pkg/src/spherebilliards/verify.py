"""Invariant battery behind the ``verify`` command."""
from __future__ import annotations

import math
import traceback
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .billiard import PhasePoint, billiard_map, generating_partials, generating_value
from .errors import BilliardError
from .geometry import JacobiState, Metric
from .linearize import Wavefront, backward_focusing_time, focusing_time, step_tangent
from .orbits import central_annulus_audit, find_birkhoff, mackay_meiss_trace, trace_response
from .table import Table


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None
    tolerance: float | None
    detail: dict = field(default_factory=dict)
    error: str | None = None


def _fd_partials(table: Table, s1: float, s2: float, h: float) -> tuple[float, float]:
    d1 = (generating_value(table, s1 + h, s2) - generating_value(table, s1 - h, s2)) / (2 * h)
    d2 = (generating_value(table, s1, s2 + h) - generating_value(table, s1, s2 - h)) / (2 * h)
    return d1, d2


def random_chords(table: Table, n: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    L = table.length
    s1 = rng.uniform(0.0, L, n)
    gap = rng.uniform(0.1 * L, 0.9 * L, n)
    return [(float(a), float(a + g)) for a, g in zip(s1, gap)]


def random_phase_points(table: Table, n: int, rng: np.random.Generator, margin: float = 0.2) -> list[PhasePoint]:
    s = rng.uniform(0.0, table.length, n)
    th = rng.uniform(margin, math.pi - margin, n)
    return [PhasePoint(float(a), float(b)) for a, b in zip(s, th)]


def check_gauss_bonnet(table, ctx, tol) -> Check:
    r = abs(table.gauss_bonnet_residual)
    return Check("gauss_bonnet", r <= tol, r, tol)


def check_partials(table, ctx, tol) -> Check:
    h = 1e-5 * table.length
    worst = 0.0
    for s1, s2 in random_chords(table, ctx["samples"], ctx["rng"]):
        a = np.array(generating_partials(table, s1, s2))
        b = np.array(_fd_partials(table, s1, s2, h))
        worst = max(worst, float(np.abs(a - b).max()))
    return Check("generating_partials", worst <= tol, worst, tol)


def _phase_sample(table, ctx):
    if "phase" not in ctx:
        out = []
        for x in random_phase_points(table, ctx["samples"], ctx["rng"]):
            y, rec = billiard_map(table, x)
            out.append((x, y, rec))
        ctx["phase"] = out
    return ctx["phase"]


def check_symplectic(table, ctx, tol) -> Check:
    worst = 0.0
    for x, y, rec in _phase_sample(table, ctx):
        D = step_tangent(table, x, rec)
        worst = max(worst, abs(math.sin(y.theta) * D.det - math.sin(x.theta)))
    return Check("symplectic_determinant", worst <= tol, worst, tol)


def check_twist(table, ctx, tol) -> Check:
    tw = min(float(rec.jacobi[0, 1]) / math.sin(y.theta) for x, y, rec in _phase_sample(table, ctx))
    return Check("twist_positivity", tw > 0.0, tw, 0.0)


def check_reversibility(table, ctx, tol) -> Check:
    """F o Theta o F = Theta on sampled points."""
    L = table.length
    worst = 0.0
    for x, y, rec in _phase_sample(table, ctx):
        z = billiard_map(table, y.reversed())[0]
        ds = abs((z.s - x.s + L / 2) % L - L / 2)
        worst = max(worst, ds, abs(z.theta - (math.pi - x.theta)))
    return Check("reversibility", worst <= tol, worst, tol)


def check_focusing(table, ctx, tol) -> Check:
    """Round-sphere front identities f + f_hat = pi and B = -cot f."""
    rng = ctx["rng"]
    m = Metric.round()
    sum_err = cot_err = 0.0
    for _ in range(ctx["samples"]):
        J0 = float(rng.uniform(0.2, 2.0))
        B0 = float(rng.uniform(-5.0, 5.0))
        w = Wavefront(JacobiState(J0, B0 * J0), math.pi / 2)
        f = focusing_time(m, w)
        fh = backward_focusing_time(m, w)
        sum_err = max(sum_err, abs(f + fh - math.pi))
        cot_err = max(cot_err, abs(B0 + math.cos(f) / math.sin(f)))
    worst = max(sum_err, cot_err)
    return Check("round_focusing", worst <= tol, worst, tol, {"sum_error": sum_err, "cot_error": cot_err})


def _orbits(table, ctx):
    if "orbits" not in ctx:
        ctx["orbits"] = [find_birkhoff(table, p, q, kind=k) for p, q in ctx["types"] for k in ("min", "minimax")]
    return ctx["orbits"]


def check_mackay_meiss(table, ctx, tol) -> Check:
    worst = 0.0
    detail = {}
    for o in _orbits(table, ctx):
        tmm = mackay_meiss_trace(table, o.config)
        err = abs(tmm - o.trace) / max(1.0, abs(o.trace))
        detail[f"{o.p}/{o.q} {o.kind}"] = {"monodromy": o.trace, "hessian": tmm, "error": err}
        worst = max(worst, err)
    return Check("mackay_meiss", worst <= tol, worst, tol, detail)


def check_annulus(table, ctx, tol) -> Check:
    failures = []
    dmin = math.inf
    for o in _orbits(table, ctx):
        a = central_annulus_audit(table, o, ctx["annulus_samples"])
        dmin = min(dmin, a.delta_n_star)
        if not a.passed:
            failures.append(f"{o.p}/{o.q} {o.kind}")
    return Check("central_annulus", not failures, dmin, None, {"failed_orbits": failures})


def check_trace_response(table, ctx, tol) -> Check:
    """Measured d tau / d eps against 2 b, the law validated on the two-sided shear relation."""
    cands = [o for o in _orbits(table, ctx) if o.defect == 0]
    cands.sort(key=lambda o: (o.q < 3, o.q))
    if not cands:
        return Check("trace_response", False, None, tol, error="no zero-defect orbit available")
    o = cands[0]
    r = trace_response(table, o, ctx["eps"])
    if abs(r.b) < 1e-10:
        return Check("trace_response", abs(r.measured_slope) <= tol, abs(r.measured_slope), tol, {"b": r.b})
    err = abs(r.measured_slope - 2.0 * r.b) / abs(2.0 * r.b)
    detail = {
        "orbit": f"{o.p}/{o.q} {o.kind}",
        "b": r.b,
        "measured_slope": r.measured_slope,
        "stated_law_relative_error": r.relative_error,
        "two_sided_residual": r.two_sided_residual,
    }
    return Check("trace_response", err <= tol, err, tol, detail)


CHECKS: list[tuple[str, Callable]] = [
    ("gauss_bonnet", check_gauss_bonnet),
    ("partials", check_partials),
    ("symplectic", check_symplectic),
    ("twist", check_twist),
    ("reversibility", check_reversibility),
    ("focusing", check_focusing),
    ("mackay_meiss", check_mackay_meiss),
    ("annulus", check_annulus),
    ("trace_response", check_trace_response),
]


def run_checks(table: Table, tolerances: dict, samples: int, types, eps: float, seed: int, annulus_samples: int = 1000) -> dict:
    """Run every check; an exception inside one check marks it failed instead of aborting."""
    ctx = {"rng": np.random.default_rng(seed), "samples": samples, "types": types, "eps": eps, "annulus_samples": annulus_samples}
    results = []
    for key, fn in CHECKS:
        tol = tolerances.get(key)
        try:
            results.append(fn(table, ctx, tol))
        except (BilliardError, ValueError, ArithmeticError) as exc:
            results.append(Check(key, False, None, tol, error=f"{type(exc).__name__}: {exc}"))
        except Exception as exc:  # keep the report intact on unexpected failures
            results.append(Check(key, False, None, tol, error="".join(traceback.format_exception_only(type(exc), exc)).strip()))
    failed = [c.name for c in results if not c.passed]
    return {"passed": not failed, "failed": failed, "checks": results}
