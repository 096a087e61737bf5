"""Run configuration: strict TOML schema, defaults, and object construction."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .geometry import Metric
from .table import Table, apply_perturbations, build_table

ENV_VAR = "SPHEREBILLIARDS_CONFIG"


class ConfigError(ConfigurationError):
    """Malformed or unknown configuration keys."""


# leaf values give the default; the type is taken from the default unless a tuple (default, type) is used
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 1,
    "metric": {
        "kind": "round",
        "harmonics": [],
        "tolerance": {"rtol": 1e-10, "atol": 1e-10, "max_step": 0.25, "curvature_grid": 120},
    },
    "table": {
        "center": [0.0, 0.0, 1.0],
        "radius": 0.7,
        "fourier": [],
        "perturbations": [],
        "panels": 512,
        "kappa_min": 1e-4,
    },
    "billiard": {"theta_min": 1e-4},
    "map": {"start": [0.0, 1.0], "iterations": 100},
    "orbits": {
        "types": ["1/2", "1/3", "2/5"],
        "seeds": 1,
        "kinds": ["min", "minimax"],
        "annulus_samples": 1000,
        "separation_tol": 1e-6,
    },
    "perturb": {"index": 0, "vertex": 0, "eps": 1e-3, "width": 0.0, "target_rho": 0.0},
    "manifolds": {"index": 0, "budget": 0.0, "h0": 1e-5, "max_spacing": 0.0, "min_angle": 1e-4},
    "portrait": {"grid": 40, "bounces": 500, "width": 900, "height": 450, "orbits": True, "manifolds": False},
    "verify": {
        "samples": 20,
        "types": ["1/2", "1/3"],
        "eps": 1e-3,
        "tolerance": {
            "gauss_bonnet": 1e-6,
            "partials": 1e-5,
            "symplectic": 1e-6,
            "reversibility": 1e-8,
            "focusing": 1e-8,
            "mackay_meiss": 1e-4,
            "trace_response": 5e-2,
        },
    },
    "pipeline": {"out_dir": "pipeline_out", "stages": ["table", "orbits", "classify", "perturb", "manifolds", "homoclinic", "report"]},
}


def _check(node: dict, defaults: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in node.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {where!r}")
        ref = defaults[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table")
            out[key] = _check(value, ref, where + ".")
        elif isinstance(ref, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where} must be a boolean")
            out[key] = value
        elif isinstance(ref, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where} must be a number")
            if isinstance(ref, int) and not isinstance(ref, bool) and not float(value).is_integer():
                raise ConfigError(f"{where} must be an integer")
            out[key] = type(ref)(value)
        elif isinstance(ref, str):
            if not isinstance(value, str):
                raise ConfigError(f"{where} must be a string")
            out[key] = value
        elif isinstance(ref, list):
            if not isinstance(value, list):
                raise ConfigError(f"{where} must be an array")
            out[key] = value
    return out


def _validate_semantics(cfg: dict) -> None:
    m = cfg["metric"]
    if m["kind"] not in ("round", "conformal"):
        raise ConfigError(f"metric.kind must be 'round' or 'conformal', got {m['kind']!r}")
    for h in m["harmonics"]:
        if not (isinstance(h, list) and len(h) == 3):
            raise ConfigError("metric.harmonics entries must be [l, m, coeff]")
    for name, v in m["tolerance"].items():
        if v <= 0:
            raise ConfigError(f"metric.tolerance.{name} must be positive")
    t = cfg["table"]
    if len(t["center"]) != 3:
        raise ConfigError("table.center must have three components")
    for f in t["fourier"]:
        if not (isinstance(f, list) and len(f) == 3):
            raise ConfigError("table.fourier entries must be [k, a_k, b_k]")
    allowed = {"kind", "s0", "eps", "delta", "width"}
    for p in t["perturbations"]:
        if not isinstance(p, dict):
            raise ConfigError("table.perturbations entries must be tables")
        extra = set(p) - allowed
        if extra:
            raise ConfigError(f"unknown perturbation keys {sorted(extra)}")
        if p.get("kind") not in ("curvature", "shift"):
            raise ConfigError("perturbation kind must be 'curvature' or 'shift'")
    for name, v in cfg["verify"]["tolerance"].items():
        if v <= 0:
            raise ConfigError(f"verify.tolerance.{name} must be positive")
    if cfg["billiard"]["theta_min"] <= 0:
        raise ConfigError("billiard.theta_min must be positive")
    for t_ in cfg["orbits"]["types"] + cfg["verify"]["types"]:
        parse_type(t_)


def parse_type(text: str) -> tuple[int, int]:
    try:
        p, q = (int(v) for v in str(text).split("/"))
    except ValueError as exc:
        raise ConfigError(f"rotation type {text!r} is not of the form p/q") from exc
    return p, q


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def section(self, name: str) -> dict:
        return self.data[name]


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> RunConfig:
    """Read TOML from ``path`` (or the env var, or defaults only) and apply dotted overrides."""
    raw: dict = {}
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {str(p)!r} not found")
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {str(p)!r}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        node = raw
        keys = dotted.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} descends into a non-table")
        node[keys[-1]] = value
    cfg = _check(raw, DEFAULTS, "")
    _validate_semantics(cfg)
    return RunConfig(cfg)


def config_from_dict(raw: dict) -> RunConfig:
    cfg = _check(raw, DEFAULTS, "")
    _validate_semantics(cfg)
    return RunConfig(cfg)


def parse_value(text: str) -> Any:
    """Parse a command-line override value as a TOML value, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def make_metric(cfg: RunConfig) -> Metric:
    m = cfg.section("metric")
    tol = m["tolerance"]
    kw = dict(rtol=tol["rtol"], atol=tol["atol"], max_step=tol["max_step"], grid=int(tol["curvature_grid"]))
    if m["kind"] == "round":
        return Metric.round(**kw)
    return Metric.conformal([tuple(h) for h in m["harmonics"]], **kw)


def make_table(cfg: RunConfig) -> Table:
    t = cfg.section("table")
    table = build_table(
        make_metric(cfg),
        t["center"],
        [tuple(f) for f in t["fourier"]],
        radius=t["radius"],
        panels=int(t["panels"]),
        kappa_min=t["kappa_min"],
    )
    return apply_perturbations(table, t["perturbations"])
