"""Scenario configuration files (YAML) with schema validation."""
from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path

import jsonschema
import yaml


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}


def _closed(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_region = {"oneOf": [
    _closed({"ball": _closed({"center": _point, "radius": _pos}, ["center", "radius"])}, ["ball"]),
    _closed({"box": _closed({"lo": _point, "hi": _point}, ["lo", "hi"])}, ["box"]),
    _closed({"union": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/region"}}},
            ["union"]),
]}

SCHEMA = {
    "$defs": {"region": _region},
    **_closed({
        "name": {"type": "string"},
        "system": _closed({
            "preset": {"enum": ["dubins", "linear1d-test", "integrator1d-test"]},
            "dt": _pos,
            "planar_box": _closed({"lo": _point, "hi": _point}, ["lo", "hi"]),
        }, ["preset"]),
        "dictionary": _closed({
            "counts": {"type": "array", "items": _int_pos, "minItems": 1},
            "sigma_ratio": _pos,
            "periodic_angle": {"type": "boolean"},
            "pad": {"type": "number", "minimum": 0},
            "pad_cost": {"type": "number", "minimum": 0},
        }, ["counts"]),
        "snapshots": _closed({
            "M": {"oneOf": [_int_pos, {"const": "auto"}]},
            "M_per_basis": _int_pos,
            "seed": {"type": "integer"},
            "dt": _pos,
            "sampling": {"enum": ["uniform", "sobol"]},
        }),
        "quadrature": _closed({"nodes_per_spacing": _int_pos}),
        "terrain": _closed({
            "kind": {"enum": ["bundled", "analytic", "raster", "binary-obstacle"]},
            "name": {"type": "string"},
            "base_offset": {"type": "number", "minimum": 0},
            "hills": {"type": "array", "items": _closed(
                {"center": _point, "height": {"type": "number", "minimum": 0}, "width": _pos},
                ["center", "height", "width"])},
            "path": {"type": "string"},
            "normalize": {"type": "boolean"},
            "region": {"$ref": "#/$defs/region"},
        }, ["kind"]),
        "problem": _closed({
            "X0": {"$ref": "#/$defs/region"},
            "XT": {"$ref": "#/$defs/region"},
            "Xu": {"$ref": "#/$defs/region"},
            "alpha": {"type": "number", "minimum": 0},
            "beta": {"type": "number", "minimum": 0},
            "gamma": {"oneOf": [_pos, {"const": "auto"}]},
            "gamma_factor": _pos,
            "L": {"type": "array", "items": _pos, "minItems": 1},
            "curvature": {"oneOf": [_pos, {"type": "null"}]},
            "eps": {"type": "number", "minimum": 0},
            "obstacle_tau": {"type": "number", "minimum": 0},
            "h0_center": _point,
            "h0_radius": _pos,
            "projection": {"enum": ["tikhonov", "nonneg"]},
        }, ["X0", "XT"]),
        "solver": _closed({
            "method": {"enum": ["highs-ipm", "builtin"]},
            "tol": _pos,
            "max_iter": _int_pos,
        }),
        "evaluation": _closed({
            "n_samples": {"type": "integer", "minimum": 0},
            "t_max": _pos,
            "dt": _pos,
            "seed": {"type": "integer"},
            "save_trajectories": {"type": "integer", "minimum": 0},
            "raster_theta": _num,
        }),
        "output": {"type": "string"},
    }, ["system", "dictionary", "problem"]),
}

DEFAULTS = {
    "name": "scenario",
    "system": {"dt": 0.01},
    "dictionary": {"sigma_ratio": 1.2, "periodic_angle": True, "pad": 0.0,
                   "pad_cost": 0.0},
    "snapshots": {"M": "auto", "M_per_basis": 10, "seed": 0, "sampling": "uniform"},
    "quadrature": {"nodes_per_spacing": 3},
    "terrain": {"kind": "bundled", "name": "hills-A"},
    "problem": {"alpha": 1.0, "beta": 1.0, "gamma": "auto", "gamma_factor": 1.5, "L": [3.0, 3.0],
                "curvature": None, "eps": 0.1, "obstacle_tau": 1e-6, "projection": "tikhonov"},
    "solver": {"method": "highs-ipm", "tol": 1e-8, "max_iter": 200},
    "evaluation": {"n_samples": 100, "t_max": 60.0, "seed": 1, "save_trajectories": 10,
                   "raster_theta": 0.0},
    "output": "out",
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("X0", "XT", "Xu", "region"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw, base_dir="."):
    """Check ``raw`` against the schema and fill in defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid scenario config at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    cfg["_base_dir"] = str(base_dir)
    if cfg["terrain"]["kind"] == "raster":
        p = Path(cfg["terrain"]["path"])
        if not p.is_absolute():
            p = Path(base_dir) / p
        if not p.exists():
            raise ConfigError(f"raster file {p} does not exist")
    if cfg["terrain"]["kind"] == "bundled":
        from .terrain import BUNDLED

        if cfg["terrain"].get("name") not in BUNDLED:
            raise ConfigError(f"unknown bundled terrain {cfg['terrain'].get('name')!r}")
    return cfg


def load_config(path):
    """Load a scenario file, or a bundled scenario by name ('s1', 's2')."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and bundled_path(str(path)) is not None:
        p = bundled_path(str(path))
    try:
        raw = yaml.safe_load(Path(p).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    if not isinstance(raw, dict):
        raise ConfigError("scenario config must be a mapping")
    return validate(raw, Path(p).parent)


def bundled_path(name):
    ref = resources.files("densnav") / "scenarios" / f"{name}.yaml"
    return Path(str(ref)) if ref.is_file() else None
