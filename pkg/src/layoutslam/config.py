"""Scenario configuration: JSON schema, validation, and construction of simulation objects.

Configs are versioned by ``schema_version`` (currently 1). Every section
except ``world`` and ``trajectory`` is optional and falls back to defaults.
"""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .frontend import FrontendParams
from .sim import (
    Intrinsics,
    NoiseSpec,
    Scenario,
    SensorModel,
    generate_world,
    make_trajectory,
)

SCHEMA_VERSION = 1

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_xy = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_opening = {
    "type": "object",
    "required": ["side", "start", "end"],
    "additionalProperties": False,
    "properties": {"side": {"enum": ["xmin", "xmax", "ymin", "ymax"]}, "start": _num, "end": _num},
}

_primitive = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["box", "room", "corridor", "block", "plane"]},
        "min": _xy,
        "max": _xy,
        "origin": _xy,
        "width": _pos,
        "length": _pos,
        "height": _pos,
        "z": _num,
        "floor": {"type": "boolean"},
        "ceiling": {"type": "boolean"},
        "top": {"type": "boolean"},
        "openings": {"type": "array", "items": _opening},
        "axis": {"enum": ["x", "y", "z", "X", "Y", "Z"]},
        "offset": _num,
        "facing": {"enum": [-1, 1]},
        "extent": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "name": {"type": "string"},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "world", "trajectory"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "world": {
            "type": "object",
            "required": ["primitives"],
            "additionalProperties": False,
            "properties": {"primitives": {"type": "array", "items": _primitive}},
        },
        "trajectory": {
            "type": "object",
            "required": ["waypoints", "step"],
            "additionalProperties": False,
            "properties": {
                "waypoints": {"type": "array", "items": _xy, "minItems": 2},
                "step": _pos,
                "height": _num,
                "yaw_offset_deg": _num,
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "odom_sigma": _nonneg,
                "odom_bias": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "range_sigma": _nonneg,
                "yaw_sigma_deg": _nonneg,
                "depth_sigma_rel": _nonneg,
                "seed": {"type": "integer"},
            },
        },
        "sensor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["range", "depth"]},
                "hfov_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
                "vfov_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
                "max_range": _pos,
                "min_extent": _nonneg,
                "width": {"type": "integer", "minimum": 8},
                "height": {"type": "integer", "minimum": 8},
            },
        },
        "frontend": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 3},
                "min_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "plane_tol": _pos,
                "min_inliers": {"type": "integer", "minimum": 1},
                "min_extent": _nonneg,
                "ransac_iters": {"type": "integer", "minimum": 1},
                "ransac_tol": _pos,
                "overlap_min": {"type": "number", "minimum": 0, "maximum": 1},
                "match_gate": _pos,
                "histogram_bin": _pos,
                "compass_radius_deg": _pos,
                "compass_step_deg": _pos,
                "initial_yaw_deg": _num,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": _nonneg,
                "mu": _pos,
                "max_gap": _pos,
                "anchor_weight": _pos,
                "weighted": {"type": "boolean"},
                "max_iter": {"type": "integer", "minimum": 1},
                "residual_norm": {"enum": ["l2", "l1", "linf"]},
                "warn_ratio": {"type": "number", "minimum": 1},
                "delta_mode": {"enum": ["relative", "noise"]},
                "noise_confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "adversarial": {"type": "boolean"},
                "min_pair_distance": _nonneg,
                "match_tolerance": _pos,
            },
        },
    },
}

DEFAULTS = {
    "noise": {
        "odom_sigma": 0.0,
        "odom_bias": [0.0, 0.0, 0.0],
        "range_sigma": 0.0,
        "yaw_sigma_deg": 0.0,
        "depth_sigma_rel": 0.005,
        "seed": 0,
    },
    "sensor": {
        "mode": "range",
        "hfov_deg": 100.0,
        "vfov_deg": 85.0,
        "max_range": 6.0,
        "min_extent": 0.25,
        "width": 176,
        "height": 144,
    },
    "frontend": {
        "k": 5,
        "min_fraction": 0.6,
        "plane_tol": 0.03,
        "min_inliers": 50,
        "min_extent": 0.25,
        "ransac_iters": 100,
        "ransac_tol": 0.03,
        "overlap_min": 0.3,
        "match_gate": 0.1,
        "histogram_bin": 0.05,
        "compass_radius_deg": 0.3,
        "compass_step_deg": 0.1,
        "initial_yaw_deg": 0.0,
    },
    "solver": {
        "epsilon": 0.02,
        "mu": 0.3,
        "max_gap": 1.0,
        "anchor_weight": 1e3,
        "weighted": False,
        "max_iter": 20000,
        "residual_norm": "l2",
        "warn_ratio": 1.2,
        "delta_mode": "relative",
        "noise_confidence": 0.999,
    },
    "evaluation": {
        "adversarial": False,
        "min_pair_distance": 1.0,
        "match_tolerance": 0.3,
    },
    "trajectory": {"height": 1.2, "yaw_offset_deg": 0.0},
}


class ConfigError(ValueError):
    pass


def _key_path(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        leaf = ",".join(extra)
        return f"{path}.{leaf}" if path else leaf
    if err.validator == "required":
        missing = err.message.split("'")[1]
        return f"{path}.{missing}" if path else missing
    return path or "<root>"


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = errors[0]
        raise ConfigError(f"config error at '{_key_path(err)}': {err.message}")
    solver = cfg.get("solver", {})
    if solver.get("residual_norm", "l2") != "l2":
        raise ConfigError("config error at 'solver.residual_norm': only 'l2' is supported")
    if solver.get("delta_mode") == "noise":
        noise = cfg.get("noise", {})
        for key in ("odom_sigma", "range_sigma"):
            if noise.get(key, 0.0) <= 0:
                raise ConfigError(f"config error at 'noise.{key}': delta_mode 'noise' needs a positive sigma")


def with_defaults(cfg: dict) -> dict:
    out = copy.deepcopy(cfg)
    for section, values in DEFAULTS.items():
        merged = dict(values)
        merged.update(out.get(section, {}))
        out[section] = merged
    out.setdefault("name", "scenario")
    return out


def load_config(source) -> dict:
    """Read, validate and default-fill a scenario config from a path, bundled name, or dict."""
    if isinstance(source, dict):
        cfg = source
    else:
        path = Path(source)
        if not path.exists():
            bundled = resources.files("layoutslam") / "scenarios" / f"{source}.json"
            if bundled.is_file():
                cfg = json.loads(bundled.read_text())
            else:
                raise ConfigError(f"no such config: {source}")
        else:
            try:
                cfg = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return with_defaults(cfg)


def bundled_scenarios() -> list[str]:
    root = resources.files("layoutslam") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def frontend_params(cfg: dict) -> FrontendParams:
    f = cfg["frontend"]
    return FrontendParams(
        k=f["k"],
        min_fraction=f["min_fraction"],
        plane_tol=f["plane_tol"],
        min_inliers=f["min_inliers"],
        min_extent=f["min_extent"],
        ransac_iters=f["ransac_iters"],
        ransac_tol=f["ransac_tol"],
        overlap_min=f["overlap_min"],
        match_gate=f["match_gate"],
        histogram_bin=f["histogram_bin"],
        seed=cfg["noise"]["seed"],
    )


def build_scenario(cfg: dict) -> Scenario:
    world = generate_world(cfg["world"])
    tr = cfg["trajectory"]
    traj = make_trajectory(
        tr["waypoints"], tr["step"], tr["height"], math.radians(tr["yaw_offset_deg"]), world=world
    )
    n = cfg["noise"]
    noise = NoiseSpec(
        odom_sigma=n["odom_sigma"],
        odom_bias=tuple(n["odom_bias"]),
        range_sigma=n["range_sigma"],
        yaw_sigma=math.radians(n["yaw_sigma_deg"]),
        depth_sigma_rel=n["depth_sigma_rel"],
        seed=n["seed"],
    )
    s = cfg["sensor"]
    sensor = SensorModel(s["hfov_deg"], s["vfov_deg"], s["max_range"], s["min_extent"])
    intr = None
    if s["mode"] == "depth":
        intr = Intrinsics.from_fov(s["width"], s["height"], s["hfov_deg"], s["vfov_deg"])
    return Scenario(cfg["name"], world, traj, noise, sensor, s["mode"], intr, cfg)


def random_scenario_config(seed: int) -> dict:
    """A small randomized loop scenario: one room, optional door gap, optional free-standing panel.

    Dimensions, openings and noise levels are drawn from ``seed``. Distinct
    parallel planes of equal facing stay at least 0.4 m apart, so every
    false hypothesis has a true gap of that size or more.
    """
    rng = np.random.default_rng([seed, 7])
    w = round(float(rng.uniform(4.5, 7.0)), 2)
    h = round(float(rng.uniform(4.0, 5.5)), 2)
    inset = 1.0
    room = {"type": "box", "min": [0, 0], "max": [w, h], "floor": False, "ceiling": False, "openings": []}
    if rng.random() < 0.5:
        side = str(rng.choice(["xmin", "xmax", "ymin", "ymax"]))
        span = h if side in ("xmin", "xmax") else w
        start = round(float(rng.uniform(1.0, span - 2.0)), 2)
        room["openings"].append({"side": side, "start": start, "end": start + 0.9})
    prims = [room]
    if rng.random() < 0.7:
        # a panel standing in front of the x = 0 wall, facing the same way
        off = round(float(rng.uniform(0.4, 0.6)), 2)
        v0 = round(float(rng.uniform(1.0, h - 2.0)), 2)
        prims.append({"type": "plane", "axis": "x", "offset": off, "facing": 1, "extent": [v0, v0 + 0.8, 0, 1.8]})
    step = 0.5
    bias = float(rng.uniform(0.0, 0.01)) * step
    heading = float(rng.uniform(0.0, 2 * math.pi))
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"random_{seed}",
        "world": {"primitives": prims},
        "trajectory": {
            "waypoints": [[inset, inset], [w - inset, inset], [w - inset, h - inset], [inset, h - inset], [inset, inset]],
            "step": step,
        },
        "noise": {
            "odom_sigma": float(rng.uniform(0.002, 0.01)),
            "odom_bias": [bias * math.cos(heading), bias * math.sin(heading), 0.0],
            "range_sigma": float(rng.uniform(0.005, 0.02)),
            "seed": int(seed),
        },
        "solver": {"delta_mode": "noise", "weighted": True},
    }
