"""Experiment configuration: schema, defaults and validation."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema

COMMANDS = ("sample", "clan-stats", "connectivity", "regularity", "multiscale", "disorder-check")

_number_list = {"type": "array", "items": {"type": "number"}}
_site = {"type": "array", "items": {"type": "integer"}, "minItems": 1}
_table_fn = {
    "anyOf": [
        {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
        {"type": "object", "properties": {
            "type": {"enum": ["free", "hardcore", "power", "table"]},
            "beta": {"type": "number", "minimum": 0, "maximum": 1},
            "values": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        }, "required": ["type"], "additionalProperties": False},
    ]
}
_marginal = {
    "type": "object",
    "properties": {
        "name": {"enum": ["uniform", "exponential", "lognormal", "bernoulli_mixture", "degenerate"]},
        "low": {"type": "number"}, "high": {"type": "number"}, "scale": {"type": "number", "exclusiveMinimum": 0},
        "mean": {"type": "number"}, "sigma": {"type": "number", "minimum": 0},
        "p": {"type": "number", "minimum": 0, "maximum": 1}, "value": {"type": "number", "minimum": 0},
    },
    "required": ["name"],
    "additionalProperties": False,
}

_params = {
    "sample": {
        "max_cylinders": {"type": "integer", "minimum": 1},
    },
    "clan-stats": {
        "x": _site,
        "T": _number_list,
        "L": _number_list,
        "q": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "max_cylinders": {"type": "integer", "minimum": 1},
    },
    "connectivity": {
        "x": _site,
        "t_x": {"type": "number"},
        "targets": {"type": "array", "items": _site, "minItems": 1},
        "t_y": {"type": "number"},
        "box": {"anyOf": [{"type": "null"}, {
            "type": "object", "properties": {"L": {"type": "number", "exclusiveMinimum": 0},
                                             "T": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["L", "T"], "additionalProperties": False}]},
    },
    "regularity": {
        "sites": {"anyOf": [{"type": "null"}, {"type": "array", "items": _site}]},
        "m": {"type": "number", "exclusiveMinimum": 0},
        "L": {"type": "number", "exclusiveMinimum": 1},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "delta": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "R": {"type": ["integer", "null"], "minimum": 1},
    },
    "multiscale": {
        "a": {"type": ["number", "null"]},
        "L0": {"type": "number", "exclusiveMinimum": 1},
        "n_scales": {"type": "integer", "minimum": 1, "maximum": 12},
        "m": {"type": "number", "exclusiveMinimum": 0},
        "simulate": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "env_replicas": {"type": "integer", "minimum": 30},
        "m0": {"type": "number", "exclusiveMinimum": 0},
        "m_inf": {"type": "number", "exclusiveMinimum": 0},
    },
    "disorder-check": {
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "rho": {"type": ["number", "null"], "minimum": 0, "exclusiveMaximum": 1},
        "epsilon_rho": {"type": "number", "exclusiveMinimum": 0},
    },
}

PARAM_DEFAULTS = {
    "sample": {"max_cylinders": 1_000_000},
    "clan-stats": {"x": None, "T": [0.5, 1.0, 2.0, 4.0], "L": [0, 1, 2, 3], "q": None,
                   "max_cylinders": 1_000_000},
    "connectivity": {"x": None, "t_x": 0.0, "targets": None, "t_y": -0.5, "box": None},
    "regularity": {"sites": None, "m": 0.1, "L": 2.0, "T": 1.0, "confidence": 0.95, "delta": None, "R": None},
    "multiscale": {"a": None, "L0": 2.0, "n_scales": 4, "m": 0.1, "simulate": [0], "env_replicas": 30,
                   "m0": 1.0, "m_inf": 0.5},
    "disorder-check": {"epsilon": 1.0, "a": None, "rho": None, "epsilon_rho": 0.05},
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "clansim experiment",
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "model": {
            "type": "object",
            "properties": {
                "name": {"enum": ["hardcore", "area_interaction", "free", "strauss", "loss_network",
                                  "random_cluster"]},
                "d": {"type": "integer", "minimum": 1, "maximum": 4},
                "shape": {"enum": ["single_site", "domino"]},
                "shapes": {"type": "array", "items": {"type": "array", "items": _site, "minItems": 1},
                           "minItems": 1},
                "grain": {"type": "array", "items": _site, "minItems": 1},
                "F": _table_fn,
                "r": {"type": "integer", "minimum": 1},
                "penalty": _table_fn,
                "max_len": {"type": "integer", "minimum": 1},
                "capacity": {"anyOf": [{"type": "integer", "minimum": 1}, {"const": "inf"}]},
                "max_links": {"type": "integer", "minimum": 1},
                "min_links": {"type": "integer", "minimum": 1},
            },
            "required": ["name"],
            "additionalProperties": False,
        },
        "disorder": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["site", "site-link"]},
                "marginal": _marginal,
                "link_marginal": _marginal,
                "rate_map": {
                    "type": "object",
                    "properties": {
                        "combine": {"enum": ["mean", "sum", "product", "max", "min", "germ", "random_cluster"]},
                        "scale": {"type": "number", "minimum": 0},
                        "kind_weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "region": {
            "type": "object",
            "properties": {
                "center": _site,
                "radius": {"type": "integer", "minimum": 0, "maximum": 200},
            },
            "required": ["radius"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "replicas": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "params": {"type": "object"},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "model": {"name": "hardcore", "d": 1},
    "disorder": {"kind": "site", "marginal": {"name": "degenerate", "value": 0.5}, "rate_map": {}},
    "region": {"radius": 6},
    "seed": 0,
    "replicas": 1000,
    "workers": 1,
    "params": {},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` is a JSON pointer to the offending value."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path or "/"
        self.message = message

    def to_dict(self) -> dict:
        return {"error": "config", "path": self.path, "message": self.message}


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _validate(instance, schema, prefix=()) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        e = errors[0]
        raise ConfigError(_pointer(list(prefix) + list(e.absolute_path)), e.message)


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config file: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def resolve_config(raw: Mapping | None, command: str, overrides: Mapping | None = None) -> dict:
    """Validate ``raw``, fill defaults and apply scalar overrides.

    Raises ConfigError with a JSON pointer path on the first problem found.
    """
    if command not in COMMANDS:
        raise ConfigError("/command", f"unknown command {command!r}")
    raw = copy.deepcopy(dict(raw or {}))
    _validate(raw, SCHEMA)
    if raw.get("command", command) != command:
        raise ConfigError("/command", f"config is for {raw['command']!r}, not {command!r}")
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        cfg[key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    cfg["command"] = command
    cfg["model"].setdefault("d", 1)
    d = cfg["model"]["d"]
    cfg["region"].setdefault("center", [0] * d)
    if len(cfg["region"]["center"]) != d:
        raise ConfigError("/region/center", f"expected {d} coordinates")

    pschema = {"type": "object", "properties": _params[command], "additionalProperties": False}
    _validate(cfg["params"], pschema, ("params",))
    params = copy.deepcopy(PARAM_DEFAULTS[command])
    params.update(cfg["params"])
    origin = list(cfg["region"]["center"])
    if "x" in params and params["x"] is None:
        params["x"] = origin
    if command == "connectivity" and params["targets"] is None:
        params["targets"] = [[origin[0] + k] + origin[1:] for k in range(4)]
    for key in ("x",):
        if key in params and len(params[key]) != d:
            raise ConfigError(f"/params/{key}", f"expected {d} coordinates")
    for i, s in enumerate(params.get("targets") or []):
        if len(s) != d:
            raise ConfigError(f"/params/targets/{i}", f"expected {d} coordinates")
    cfg["params"] = params
    _validate({k: v for k, v in cfg.items()}, SCHEMA)
    for key in ("seed", "replicas", "workers"):
        _validate({key: cfg[key]}, SCHEMA)
    return cfg


def config_hash(cfg: Mapping) -> str:
    """Digest of everything that can change results (output path and worker count excluded)."""
    body = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
