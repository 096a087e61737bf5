"""Compute steps shared by the command line and the pipeline.

Every function here is pure: it takes a table plus plain options and returns
JSON-ready records, so tasks can be fanned out to worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable

import numpy as np

from .billiard import PhasePoint, iterate
from .errors import BilliardError, NoConvergence, TwistDegenerate
from .manifolds import (
    MINUS,
    PLUS,
    STABLE,
    UNSTABLE,
    ManifoldBranch,
    entropy_certificate,
    hyperbolic_frame,
    grow_branch,
)
from .orbits import (
    ELLIPTIC,
    Configuration,
    PeriodicOrbit,
    _newton_polish,
    central_annulus_audit,
    find_birkhoff,
    mackay_meiss_trace,
    orbit_from_config,
    resonance_flag,
    rotation_tune,
    trace_response,
)
from .table import Table


def fan_out(fn: Callable, tasks: Iterable, workers: int = 1) -> list:
    """Ordered map, in-process for one worker, else over a process pool."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# -- map ------------------------------------------------------------------------


def map_records(table: Table, start: PhasePoint, iterations: int, theta_min: float) -> tuple[list[dict], str | None]:
    seg = iterate(table, start, iterations, theta_min)
    out = [{"k": 0, "s": seg.points[0].s, "theta": seg.points[0].theta, "flight_length": 0.0}]
    for k, (x, c) in enumerate(zip(seg.points[1:], seg.chords), start=1):
        out.append({"k": k, "s": x.s, "theta": x.theta, "flight_length": c.flight_length})
    return out, seg.error


# -- orbits ---------------------------------------------------------------------


def orbit_record(table: Table, orbit: PeriodicOrbit) -> dict:
    return {
        "p": orbit.p,
        "q": orbit.q,
        "kind": orbit.kind,
        "s": [x.s for x in orbit.phase_points],
        "lifted_s": list(orbit.config.points),
        "theta": [x.theta for x in orbit.phase_points],
        "tau": orbit.trace,
        "class": orbit.classification,
        "degenerate": orbit.degenerate,
        "rho": orbit.rotation_number,
        "defect": orbit.defect,
        "symmetric": orbit.symmetric,
        "residual": orbit.grad_residual,
    }


def orbit_from_record(table: Table, rec: dict) -> PeriodicOrbit:
    """Rebuild an orbit from its (rounded) record by re-polishing the configuration."""
    cfg = Configuration(tuple(float(v) for v in rec["lifted_s"]), int(rec["p"]), int(rec["q"]))
    crit, res = _newton_polish(table, cfg)
    if res >= 1e-9:
        raise NoConvergence(f"stored orbit does not re-close on this table (|grad| = {res:.3g})")
    return orbit_from_config(table, crit, kind=rec.get("kind", "min"), residual=res)


def _same_orbit(a: PeriodicOrbit, b: PeriodicOrbit, L: float, tol: float) -> bool:
    if (a.p, a.q, a.kind) != (b.p, b.q, b.kind):
        return False
    sa = np.sort(np.array([x.s for x in a.phase_points]) % L)
    sb = np.sort(np.array([x.s for x in b.phase_points]) % L)
    for shift in range(len(sb)):
        d = (np.roll(sb, shift) - sa + L / 2) % L - L / 2
        if np.abs(d).max() < tol:
            return True
    return False


def _orbit_task(args) -> dict:
    table, p, q, base, kind = args
    seed = Configuration.regular(table, p, q, base)
    try:
        orbit = find_birkhoff(table, p, q, seed=seed, kind=kind)
    except BilliardError as exc:
        return {"p": p, "q": q, "kind": kind, "seed_base": base, "error": f"{type(exc).__name__}: {exc}"}
    return {"orbit": orbit}


def search_orbits(table: Table, types, seeds: int, kinds, workers: int = 1, separation_tol: float = 1e-6):
    """All (type, seed, kind) searches; duplicates found from different seeds are merged.

    Seed j of type (p, q) starts from the regular configuration offset by
    j L / (seeds q).  Returns (records, failures) in deterministic order.
    """
    L = table.length
    tasks = [(table, p, q, j * L / (seeds * q), kind) for (p, q) in types for j in range(seeds) for kind in kinds]
    results = fan_out(_orbit_task, tasks, workers)
    found: list[PeriodicOrbit] = []
    failures = []
    for r in results:
        if "error" in r:
            failures.append(r)
            continue
        o = r["orbit"]
        if not any(_same_orbit(o, f, L, 1e3 * separation_tol * L) for f in found):
            found.append(o)
    return [orbit_record(table, o) for o in found], failures


# -- classification ---------------------------------------------------------------


def classify_record(table: Table, rec: dict, annulus_samples: int) -> dict:
    orbit = orbit_from_record(table, rec)
    out = {"p": orbit.p, "q": orbit.q, "kind": orbit.kind, "tau": orbit.trace, "class": orbit.classification}
    try:
        tmm = mackay_meiss_trace(table, orbit.config)
        out["tau_hessian"] = tmm
        out["trace_agreement"] = abs(tmm - orbit.trace) / max(1.0, abs(orbit.trace))
    except TwistDegenerate as exc:
        out["tau_hessian"] = None
        out["trace_agreement"] = None
        out["hessian_note"] = str(exc)
    if orbit.classification == ELLIPTIC:
        rep = resonance_flag(orbit.rotation_number)
        out["rho"] = orbit.rotation_number
        out["resonant"] = rep.flagged
        out["resonance"] = list(rep.resonance) if rep.resonance else None
    else:
        out["rho"] = None
        out["resonant"] = None
        out["resonance"] = None
    audit = central_annulus_audit(table, orbit, annulus_samples)
    out["annulus"] = {"delta_n_star": audit.delta_n_star, "delta_star": audit.delta_star, "passed": audit.passed}
    out["defect"] = orbit.defect
    out["symmetric"] = orbit.symmetric
    return out


# -- perturbation ---------------------------------------------------------------


def perturb_record(table: Table, orbit: PeriodicOrbit, vertex: int, eps: float, width: float | None, target_rho: float | None = None) -> dict:
    r = trace_response(table, orbit, eps, width, vertex)
    out = {
        "vertex": vertex,
        "s0": r.s0,
        "eps": r.eps,
        "width": width if width is not None else table.length / 20.0,
        "tau": r.tau,
        "tau_eps": r.tau_eps,
        "b": r.b,
        "measured_slope": r.measured_slope,
        "slope_over_b": r.measured_slope / r.b if r.b else None,
        "relative_error": r.relative_error,
        "shear_residual": r.shear_residual,
        "two_sided_residual": r.two_sided_residual,
        "monodromy": r.monodromy,
        "monodromy_eps": r.monodromy_eps,
    }
    if target_rho:
        new_table, new_orbit, e = rotation_tune(table, orbit, target_rho, width, vertex)
        out["tune"] = {"target_rho": target_rho, "eps": e, "rho": new_orbit.rotation_number, "tau": new_orbit.trace}
    return out


# -- manifolds -------------------------------------------------------------------


def branch_record(b: ManifoldBranch) -> dict:
    return {
        "kind": b.kind,
        "side": b.side,
        "eigenvalue": b.eigenvalue,
        "h0": b.h0,
        "generations": b.growth_generations,
        "complete": b.complete,
        "error": b.error,
        "arclength": b.arclength,
        "points": b.points,
    }


def _branch_task(args):
    table, orbit, frame, kind, side, budget, h0, spacing = args
    return grow_branch(table, orbit, kind, side, budget, h0=h0, frame=frame, max_spacing=spacing)


def grow_all(table: Table, orbit: PeriodicOrbit, budget: float, h0: float, spacing: float | None, workers: int = 1) -> dict:
    frame = hyperbolic_frame(table, orbit)
    keys = [(k, s) for k in (UNSTABLE, STABLE) for s in (PLUS, MINUS)]
    tasks = [(table, orbit, frame, k, s, budget, h0, spacing) for k, s in keys]
    return dict(zip(keys, fan_out(_branch_task, tasks, workers)))


def crossing_record(c) -> dict:
    return {
        "s": c.point.s,
        "theta": c.point.theta,
        "lifted": list(c.lifted),
        "angle": c.angle,
        "sign": c.sign,
        "deck_shift": c.shift,
        "sides": list(c.kinds),
        "slope_unstable": c.slope_u,
        "slope_stable": c.slope_s,
        "refined": c.refined,
    }


def homoclinic_record(table: Table, orbit: PeriodicOrbit, budget: float, h0: float, min_angle: float, spacing: float | None):
    cert = entropy_certificate(table, orbit, budget, h0=h0, min_angle=min_angle, max_spacing=spacing)
    rec = {
        "applicable": cert.applicable,
        "found": cert.found,
        "message": cert.message,
        "eigenvalue": cert.eigenvalue,
        "best": crossing_record(cert.crossing) if cert.crossing else None,
        "crossings": [crossing_record(c) for c in cert.crossings],
    }
    return rec, cert


def default_budget(table: Table, budget: float) -> float:
    return budget if budget > 0 else table.length


def optional(x: float) -> float | None:
    return x if x and x > 0 else None


def finite(x) -> bool:
    return x is not None and math.isfinite(x)
