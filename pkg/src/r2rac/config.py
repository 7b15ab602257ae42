"""Experiment configuration: one JSON document plus dotted-path overrides."""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from .actuator import J_UNCONTROLLED, NO_CONTACT_PENALTY

HYPER_PS = {"s": 0.2, "s_min": 2e-10, "s_max": 2.0, "alpha_con": 0.5, "alpha_exp": 2.0}
HYPER_AC = {"s": 0.2, "s_min": 2e-10, "s_max": 2.0, "alpha_con": 0.7, "alpha_exp": 1.1,
            "beta": 0.8, "gb_form": "ratio"}

DEFAULTS = {
    "strategy": "Hybrid",
    "n_trials": 200,
    "n_ops": 300,
    "perturbation": 0.05,
    "seed": 12345,
    "jobs": None,
    "params": None,  # nominal physical parameters; None means the built-in table
    "sim": {"dt": 1e-6, "T_max": None, "hold_after_tf": True, "post_tf_voltage": None,
            "no_contact_penalty": NO_CONTACT_PENALTY},
    "hyper": {"PS+": dict(HYPER_PS), "AC": dict(HYPER_AC)},
    "ps_dims": 4,
    "gamma": 0.9,
    "censor_penalty": False,
    "seed_slope": False,
    # J* schedule for the hybrid law: exponential | table | constant
    "jstar": {"kind": "exponential", "start": J_UNCONTROLLED, "tau": 40.0, "floor": 0.05,
              "path": None, "value": None},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, prefix="") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in out:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict) and key != "params":
            out[key] = _merge(out[key], value, prefix + key + ".")
        else:
            out[key] = value
    return out


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config key {path!r}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {path!r}")
    node[keys[-1]] = parse_value(raw)
    return cfg


def load_config(path=None, overrides=(), env=os.environ) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    if env.get("R2R_SEED"):
        cfg["seed"] = int(env["R2R_SEED"])
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    from .stepsize import Strategy

    try:
        Strategy.parse(cfg["strategy"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not (isinstance(cfg["n_ops"], int) and cfg["n_ops"] >= 1):
        raise ConfigError("n_ops must be an integer >= 1")
    if not (isinstance(cfg["n_trials"], int) and cfg["n_trials"] >= 1):
        raise ConfigError("n_trials must be an integer >= 1")
    if not 0 <= float(cfg["perturbation"]) < 1:
        raise ConfigError("perturbation must lie in [0, 1)")
    if not float(cfg["sim"]["dt"]) > 0:
        raise ConfigError("sim.dt must be positive")
    if cfg["jstar"]["kind"] not in ("exponential", "table", "constant"):
        raise ConfigError(f"unknown jstar.kind {cfg['jstar']['kind']!r}")
