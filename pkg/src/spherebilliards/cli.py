"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

from .billiard import PhasePoint
from .config import ENV_VAR, ConfigError, RunConfig, load_config, make_table, parse_type, parse_value
from .drivers import (
    branch_record,
    classify_record,
    default_budget,
    homoclinic_record,
    map_records,
    optional,
    orbit_from_record,
    perturb_record,
    search_orbits,
)
from .errors import BilliardError, ConfigurationError, NumericalError
from .output import dumps, jsonl, read_jsonl, write_text
from .pipeline import run_pipeline
from .portrait import compute_portrait, render_portrait
from .verify import run_checks

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, top: bool) -> None:
    d = None if top else argparse.SUPPRESS
    p.add_argument("--config", default=d, help=f"TOML config (default: ${ENV_VAR})")
    p.add_argument("--seed", type=int, default=d, help="overrides the seed key")
    p.add_argument("--workers", type=int, default=d, help="overrides the workers key")
    p.add_argument("--set", action="append", default=d, metavar="KEY=VALUE", help="override any dotted config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spherebilliards", description=__doc__.splitlines()[0])
    _common(parser, True)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, False)
    sub = parser.add_subparsers(dest="command", required=True)

    tp = sub.add_parser("table", parents=[common], help="table operations")
    tsub = tp.add_subparsers(dest="action", required=True)
    tsub.add_parser("validate", parents=[common], help="build the table and report its invariants")

    mp = sub.add_parser("map", parents=[common], help="iterate the billiard map")
    mp.add_argument("--start", help="s,theta")
    mp.add_argument("--iterations", type=int)
    mp.add_argument("--output")

    op = sub.add_parser("orbits", parents=[common], help="search Birkhoff periodic orbits")
    op.add_argument("--types", help="comma list such as 1/2,1/3,2/5")
    op.add_argument("--seeds", type=int)
    op.add_argument("--kinds", help="comma list of min,minimax")
    op.add_argument("--output")

    cp = sub.add_parser("classify", parents=[common], help="trace cross-check, resonance and annulus audit")
    cp.add_argument("--orbit-file", required=True)
    cp.add_argument("--output")

    pp = sub.add_parser("perturb", parents=[common], help="trace response to a normal perturbation")
    pp.add_argument("--orbit-file", required=True)
    pp.add_argument("--index", type=int)
    pp.add_argument("--at-vertex", type=int, dest="vertex")
    pp.add_argument("--eps", type=float)
    pp.add_argument("--width", type=float)
    pp.add_argument("--target-rho", type=float)
    pp.add_argument("--output")

    for name, helptext in (("manifolds", "grow stable/unstable branches"), ("homoclinic", "detect homoclinic crossings")):
        q = sub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("--orbit-file", required=True)
        q.add_argument("--index", type=int)
        q.add_argument("--budget", type=float)
        q.add_argument("--h0", type=float)
        q.add_argument("--output")
        if name == "homoclinic":
            q.add_argument("--svg", help="overlay of branches and crossings")

    rp = sub.add_parser("portrait", parents=[common], help="phase portrait as SVG")
    rp.add_argument("--grid", type=int)
    rp.add_argument("--bounces", type=int)
    rp.add_argument("--orbit-file", help="overlay these orbits instead of searching")
    rp.add_argument("--output")

    vp = sub.add_parser("verify", parents=[common], help="run the invariant battery")
    vp.add_argument("--output")

    lp = sub.add_parser("pipeline", parents=[common], help="run all stages with caching")
    lp.add_argument("--out-dir")
    return parser


# flag -> dotted config key, per command
FLAG_KEYS = {
    "map": {"iterations": "map.iterations"},
    "orbits": {"seeds": "orbits.seeds"},
    "perturb": {"index": "perturb.index", "vertex": "perturb.vertex", "eps": "perturb.eps", "width": "perturb.width", "target_rho": "perturb.target_rho"},
    "manifolds": {"index": "manifolds.index", "budget": "manifolds.budget", "h0": "manifolds.h0"},
    "homoclinic": {"index": "manifolds.index", "budget": "manifolds.budget", "h0": "manifolds.h0"},
    "portrait": {"grid": "portrait.grid", "bounces": "portrait.bounces"},
    "pipeline": {"out_dir": "pipeline.out_dir"},
}


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v.strip())
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    for flag, key in FLAG_KEYS.get(args.command, {}).items():
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = v
    if args.command == "map" and args.start:
        try:
            s, th = (float(x) for x in args.start.split(","))
        except ValueError as exc:
            raise ConfigError(f"--start expects s,theta, got {args.start!r}") from exc
        out["map.start"] = [s, th]
    if args.command == "orbits":
        if args.types:
            out["orbits.types"] = [t.strip() for t in args.types.split(",")]
        if args.kinds:
            out["orbits.kinds"] = [k.strip() for k in args.kinds.split(",")]
    return out


def _orbit_at(table, path: str, index: int):
    recs = read_jsonl(path)
    if not 0 <= index < len(recs):
        raise ConfigError(f"orbit index {index} out of range: {path} has {len(recs)} records")
    return orbit_from_record(table, recs[index])


def cmd_table(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    rec = {
        "valid": True,
        "length": t.length,
        "kappa_min": t.kappa_min,
        "kappa_max": t.kappa_max,
        "total_curvature": t.total_curvature,
        "gauss_bonnet_residual": t.gauss_bonnet_residual,
        "diameter_bound": t.diameter,
        "injectivity_bound": t.metric.injectivity_bound,
    }
    write_text(dumps(rec, indent=2) + "\n", None)
    return EXIT_OK


def cmd_map(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    m = cfg.section("map")
    s, th = m["start"]
    recs, err = map_records(t, PhasePoint(float(s), float(th)), m["iterations"], cfg.section("billiard")["theta_min"])
    write_text(jsonl(recs), args.output)
    if err:
        print(f"stopped early: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_orbits(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    o = cfg.section("orbits")
    types = [parse_type(x) for x in o["types"]]
    recs, failures = search_orbits(t, types, o["seeds"], o["kinds"], cfg.data["workers"], o["separation_tol"])
    write_text(jsonl(recs), args.output)
    for f in failures:
        print(f"search failed for {f['p']}/{f['q']} {f['kind']}: {f['error']}", file=sys.stderr)
    return EXIT_OK if recs else EXIT_NUMERIC


def cmd_classify(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    n = cfg.section("orbits")["annulus_samples"]
    write_text(jsonl(classify_record(t, r, n) for r in read_jsonl(args.orbit_file)), args.output)
    return EXIT_OK


def cmd_perturb(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    p = cfg.section("perturb")
    orbit = _orbit_at(t, args.orbit_file, p["index"])
    rec = perturb_record(t, orbit, p["vertex"], p["eps"], optional(p["width"]), optional(p["target_rho"]))
    write_text(dumps(rec, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_manifolds(cfg: RunConfig, args) -> int:
    from .drivers import grow_all

    t = make_table(cfg)
    m = cfg.section("manifolds")
    orbit = _orbit_at(t, args.orbit_file, m["index"])
    branches = grow_all(t, orbit, default_budget(t, m["budget"]), m["h0"], optional(m["max_spacing"]), cfg.data["workers"])
    write_text(jsonl(branch_record(b) for b in branches.values()), args.output)
    return EXIT_OK


def cmd_homoclinic(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    m = cfg.section("manifolds")
    orbit = _orbit_at(t, args.orbit_file, m["index"])
    rec, cert = homoclinic_record(t, orbit, default_budget(t, m["budget"]), m["h0"], m["min_angle"], optional(m["max_spacing"]))
    write_text(dumps(rec, indent=2) + "\n", args.output)
    if args.svg:
        from .drivers import orbit_record

        branches = [branch_record(b) for b in cert.branches.values()]
        svg = render_portrait(t, None, [orbit_record(t, orbit)], branches, rec["crossings"], title="homoclinic crossings")
        write_text(svg, args.svg)
    return EXIT_OK


def cmd_portrait(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    pc = cfg.section("portrait")
    portrait = compute_portrait(t, pc["grid"], pc["bounces"], cfg.seed, cfg.data["workers"], cfg.section("billiard")["theta_min"])
    orbits = []
    if args.orbit_file:
        orbits = read_jsonl(args.orbit_file)
    elif pc["orbits"]:
        o = cfg.section("orbits")
        orbits, _ = search_orbits(t, [parse_type(x) for x in o["types"]], o["seeds"], o["kinds"], cfg.data["workers"])
    branches = []
    if pc["manifolds"]:
        from .drivers import grow_all

        hyp = [r for r in orbits if r["class"] == "hyperbolic"]
        if hyp:
            m = cfg.section("manifolds")
            got = grow_all(t, orbit_from_record(t, hyp[0]), default_budget(t, m["budget"]), m["h0"], optional(m["max_spacing"]), cfg.data["workers"])
            branches = [branch_record(b) for b in got.values()]
    periods = sorted({r["q"] for r in orbits})
    svg = render_portrait(t, portrait, orbits, branches, (), periods, pc["width"], pc["height"], cfg.section("orbits")["annulus_samples"])
    write_text(svg, args.output)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    t = make_table(cfg)
    v = cfg.section("verify")
    types = [parse_type(x) for x in v["types"]]
    report = run_checks(t, v["tolerance"], v["samples"], types, v["eps"], cfg.seed, cfg.section("orbits")["annulus_samples"])
    write_text(dumps(report, indent=2) + "\n", args.output)
    for c in report["checks"]:
        status = "PASS" if c.passed else "FAIL"
        extra = f" ({c.error})" if c.error else ""
        print(f"{status} {c.name}: value={c.value!r} tol={c.tolerance!r}{extra}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_pipeline(cfg: RunConfig, args) -> int:
    res = run_pipeline(cfg, log=lambda m: print(m, file=sys.stderr))
    if res.failure is None:
        return EXIT_OK
    exc = res.failure["exception"]
    print(f"stage {res.failure['stage']} failed: {res.failure['error']}: {res.failure['message']}", file=sys.stderr)
    return EXIT_NUMERIC if isinstance(exc, NumericalError) else EXIT_CONFIG


COMMANDS = {
    "table": cmd_table,
    "map": cmd_map,
    "orbits": cmd_orbits,
    "classify": cmd_classify,
    "perturb": cmd_perturb,
    "manifolds": cmd_manifolds,
    "homoclinic": cmd_homoclinic,
    "portrait": cmd_portrait,
    "verify": cmd_verify,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, BilliardError) as exc:
        print(f"configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
