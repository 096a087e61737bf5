"""Staged pipeline with content-hash caching.

Stages form a small DAG; each stage key hashes the config sections it reads
plus the keys of the stages it depends on, so a change only invalidates the
stage that reads it and everything downstream.  Outputs are deterministic;
cache hits are reported in the return value, never written to the bundle.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import __version__
from .config import RunConfig, make_table, parse_type
from .drivers import (
    branch_record,
    classify_record,
    default_budget,
    homoclinic_record,
    optional,
    orbit_from_record,
    perturb_record,
    search_orbits,
)
from .errors import BilliardError
from .output import dumps, jsonl
from .portrait import render_portrait

# stage -> (config sections read, upstream stages)
STAGES: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "table": (("metric", "table", "billiard"), ()),
    "orbits": (("orbits",), ("table",)),
    "classify": ((), ("orbits",)),
    "perturb": (("perturb",), ("orbits",)),
    "manifolds": (("manifolds",), ("orbits",)),
    "homoclinic": ((), ("manifolds",)),
    "report": ((), ("table", "orbits", "classify", "perturb", "manifolds", "homoclinic")),
}


def stage_keys(cfg: RunConfig) -> dict[str, str]:
    keys: dict[str, str] = {}
    for name, (sections, deps) in STAGES.items():
        blob = {
            "stage": name,
            "version": __version__,
            "seed": cfg.seed,
            "sections": {s: cfg.section(s) for s in sections},
            "deps": [keys[d] for d in deps],
        }
        keys[name] = hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]
    return keys


@dataclass
class PipelineResult:
    out_dir: Path
    status: dict[str, str]
    cache_hits: list[str] = field(default_factory=list)
    computed: list[str] = field(default_factory=list)
    failure: dict | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


class _Context:
    """Lazily rebuilt in-memory objects shared by stages of one run."""

    def __init__(self, cfg: RunConfig, files: dict[str, dict[str, str]]):
        self.cfg = cfg
        self.files = files
        self._table = None
        self._cert = None

    @property
    def table(self):
        if self._table is None:
            self._table = make_table(self.cfg)
        return self._table

    def orbit_records(self) -> list[dict]:
        return [json.loads(l) for l in self.files["orbits"]["orbits.jsonl"].splitlines() if l.strip()]

    def load(self, stage: str, name: str):
        return json.loads(self.files[stage][name])

    def orbit(self, index: int):
        recs = self.orbit_records()
        if not 0 <= index < len(recs):
            raise BilliardError(f"orbit index {index} out of range ({len(recs)} orbits)")
        return orbit_from_record(self.table, recs[index])

    def certificate(self):
        if self._cert is None:
            m = self.cfg.section("manifolds")
            orbit = self.orbit(m["index"])
            budget = default_budget(self.table, m["budget"])
            self._cert = homoclinic_record(self.table, orbit, budget, m["h0"], m["min_angle"], optional(m["max_spacing"]))
        return self._cert


def _stage_table(ctx: _Context) -> dict[str, str]:
    t = ctx.table
    rec = {
        "length": t.length,
        "kappa_min": t.kappa_min,
        "kappa_max": t.kappa_max,
        "total_curvature": t.total_curvature,
        "area_curvature": t.area_curvature,
        "gauss_bonnet_residual": t.gauss_bonnet_residual,
        "diameter_bound": t.diameter,
        "injectivity_bound": t.metric.injectivity_bound,
    }
    return {"table.json": dumps(rec, indent=2) + "\n"}


def _stage_orbits(ctx: _Context) -> dict[str, str]:
    o = ctx.cfg.section("orbits")
    types = [parse_type(x) for x in o["types"]]
    recs, failures = search_orbits(ctx.table, types, o["seeds"], o["kinds"], ctx.cfg.data["workers"], o["separation_tol"])
    out = {"orbits.jsonl": jsonl(recs)}
    if failures:
        out["orbit_failures.jsonl"] = jsonl(failures)
    return out


def _stage_classify(ctx: _Context) -> dict[str, str]:
    n = ctx.cfg.section("orbits")["annulus_samples"]
    return {"classify.jsonl": jsonl(classify_record(ctx.table, r, n) for r in ctx.orbit_records())}


def _stage_perturb(ctx: _Context) -> dict[str, str]:
    p = ctx.cfg.section("perturb")
    orbit = ctx.orbit(p["index"])
    rec = perturb_record(ctx.table, orbit, p["vertex"], p["eps"], optional(p["width"]), optional(p["target_rho"]))
    return {"perturb.json": dumps(rec, indent=2) + "\n"}


def _stage_manifolds(ctx: _Context) -> dict[str, str]:
    _, cert = ctx.certificate()
    return {"branches.jsonl": jsonl(branch_record(b) for b in cert.branches.values())}


def _stage_homoclinic(ctx: _Context) -> dict[str, str]:
    rec, _ = ctx.certificate()
    return {"crossings.json": dumps(rec, indent=2) + "\n"}


def _stage_report(ctx: _Context) -> dict[str, str]:
    table = ctx.load("table", "table.json")
    classes = [json.loads(l) for l in ctx.files["classify"]["classify.jsonl"].splitlines() if l.strip()]
    pert = ctx.load("perturb", "perturb.json")
    cross = ctx.load("homoclinic", "crossings.json")
    report = {
        "table": table,
        "orbits": [{k: c[k] for k in ("p", "q", "kind", "tau", "class", "trace_agreement", "rho", "defect")} | {"annulus_passed": c["annulus"]["passed"]} for c in classes],
        "perturb": {k: pert[k] for k in ("eps", "b", "measured_slope", "slope_over_b", "shear_residual", "two_sided_residual")},
        "homoclinic": {k: cross[k] for k in ("applicable", "found", "message")},
    }
    branches = [json.loads(l) for l in ctx.files["manifolds"]["branches.jsonl"].splitlines() if l.strip()]
    svg = render_portrait(
        ctx.table,
        None,
        ctx.orbit_records(),
        branches,
        cross["crossings"],
        annulus_periods=sorted({r["q"] for r in ctx.orbit_records()}),
        annulus_samples=ctx.cfg.section("orbits")["annulus_samples"],
        title="branches and crossings",
    )
    return {"report.json": dumps(report, indent=2) + "\n", "overlay.svg": svg}


RUNNERS: dict[str, Callable[[_Context], dict[str, str]]] = {
    "table": _stage_table,
    "orbits": _stage_orbits,
    "classify": _stage_classify,
    "perturb": _stage_perturb,
    "manifolds": _stage_manifolds,
    "homoclinic": _stage_homoclinic,
    "report": _stage_report,
}


def run_pipeline(cfg: RunConfig, out_dir: str | Path | None = None, log: Callable[[str], None] | None = None) -> PipelineResult:
    """Run the enabled stages in order, reusing cached outputs; write a manifest."""
    out = Path(out_dir or cfg.section("pipeline")["out_dir"])
    cache = out / ".cache"
    cache.mkdir(parents=True, exist_ok=True)
    keys = stage_keys(cfg)
    enabled = [s for s in STAGES if s in cfg.section("pipeline")["stages"]]
    files: dict[str, dict[str, str]] = {}
    ctx = _Context(cfg, files)
    status: dict[str, str] = {}
    result = PipelineResult(out, status)
    manifest = {"version": __version__, "seed": cfg.seed, "stages": {}}
    for name in enabled:
        deps = STAGES[name][1]
        blocked = [d for d in deps if status.get(d) != "completed"]
        if blocked:
            status[name] = "skipped"
            manifest["stages"][name] = {"key": keys[name], "status": "skipped", "blocked_by": blocked}
            continue
        cached = cache / f"{name}-{keys[name]}.json"
        try:
            if cached.exists():
                files[name] = json.loads(cached.read_text())
                result.cache_hits.append(name)
            else:
                files[name] = RUNNERS[name](ctx)
                cached.write_text(json.dumps(files[name], sort_keys=True))
                result.computed.append(name)
        except BilliardError as exc:
            status[name] = "failed"
            err = {"stage": name, "error": type(exc).__name__, "message": str(exc)}
            manifest["stages"][name] = {"key": keys[name], "status": "failed", "error": err["error"], "message": err["message"]}
            if result.failure is None:
                result.failure = err
                result.failure["exception"] = exc
            continue
        for fname, text in files[name].items():
            (out / fname).write_text(text)
        status[name] = "completed"
        manifest["stages"][name] = {"key": keys[name], "status": "completed", "outputs": sorted(files[name])}
        if log:
            log(f"{name}: {'cache hit' if name in result.cache_hits else 'computed'}")
    (out / "manifest.json").write_text(dumps(manifest, indent=2) + "\n")
    if result.failure is not None:
        fail = {k: v for k, v in result.failure.items() if k != "exception"}
        (out / "failure.json").write_text(dumps(fail, indent=2) + "\n")
    elif (out / "failure.json").exists():
        (out / "failure.json").unlink()
    return result
