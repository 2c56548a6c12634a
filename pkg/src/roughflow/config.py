"""Experiment configuration: TOML files, presets, and strict schema checks."""

from __future__ import annotations

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

SCENARIOS = ("lift", "rde", "burgers", "camassa_holm", "euler2d", "wong_zakai", "audit")

_STR = (str,)
_NUM = (int, float)
_LIST = (list,)

# section -> key -> accepted python types
SCHEMA = {
    "driver": {
        "kind": _STR,
        "H": _NUM,
        "K": (int,),
        "seed": (int,),
        "fine_resolution": (int,),
        "path": _LIST,
        "samples": _LIST,
        "alpha": _NUM,
    },
    "grid": {"T": _NUM, "t0": _NUM, "steps": (int,), "n": (int,)},
    "model": {
        "initial": _STR + _NUM,
        "xi": _LIST,
        "xi_stream": _LIST,
        "alpha_ch": _NUM,
        "scheme": _STR,
        "cfl_safety": _NUM,
        "rough_safety": _NUM,
        "compare_burgers": (bool,),
    },
    "fields": {
        "dim": (int,),
        "drift": _LIST,
        "xi": _LIST,
        "particles": _LIST,
        "scheme": _STR,
        "ode_substeps": (int,),
        "periods": _NUM,
        "tau": _STR,
    },
    "audit": {
        "kelvin": (bool,),
        "loop_center": _LIST,
        "loop_radius": _NUM,
        "loop_points": (int,),
        "loop_scheme": _STR,
        "tolerances": (dict,),
    },
    "output": {"snapshot_every": (int,), "binary": (bool,), "figures": (bool,)},
    "wong_zakai": {
        "target": _STR,
        "base": (int,),
        "ratio": (int,),
        "levels": (int,),
        "corruption": (bool,),
        "corruption_steps": _LIST,
        "reference_steps": (int,),
    },
}
TOP_LEVEL = {"scenario": _STR, "seed": (int,), "preset": _STR}

PRESETS = {
    "lift_parabola": {
        "scenario": "lift",
        "driver": {"kind": "smooth", "path": ["t", "t**2"], "alpha": 1.0},
        "grid": {"T": 1.0, "steps": 1},
    },
    "circle_area": {
        "scenario": "rde",
        "driver": {"kind": "smooth", "path": ["cos(t)", "sin(t)"], "alpha": 1.0},
        "grid": {"T": 6.283185307179586, "steps": 256},
        "fields": {
            "dim": 3,
            "xi": [["1", "0", "-x2/2"], ["0", "1", "x1/2"]],
            "particles": [[1.0, 0.0, 0.0]],
            "scheme": "davie",
        },
    },
    "linear_scalar": {
        "scenario": "rde",
        "driver": {"kind": "smooth", "path": ["sin(3*t) + t"], "alpha": 1.0},
        "grid": {"T": 1.0, "steps": 64},
        "fields": {"dim": 1, "xi": [["x1"]], "particles": [[1.0]], "scheme": "davie"},
    },
    "burgers_sine": {
        "scenario": "burgers",
        "driver": {"kind": "fbm", "H": 0.4, "K": 1},
        "grid": {"T": 0.25, "steps": 256, "n": 256},
        "model": {"initial": "sin(x)", "xi": ["1.0"]},
    },
    "ch_alpha0": {
        "scenario": "camassa_holm",
        "driver": {"kind": "fbm", "H": 0.4, "K": 1},
        "grid": {"T": 0.25, "steps": 256, "n": 256},
        "model": {"initial": "sin(x)", "xi": ["1.0"], "alpha_ch": 0.0, "compare_burgers": True},
    },
    "taylor_green": {
        "scenario": "euler2d",
        "driver": {"kind": "fbm", "H": 0.4, "K": 2},
        "grid": {"T": 1.0, "steps": 256, "n": 128},
        "model": {"initial": "2*cos(x)*cos(y)", "xi": [["0.7", "0.3"], ["-0.2", "0.5"]]},
        "audit": {"kelvin": True, "loop_center": [0.0, 0.0], "loop_radius": 0.8, "loop_points": 256},
    },
    "euler_generic": {
        "scenario": "euler2d",
        "driver": {"kind": "fbm", "H": 0.4, "K": 2},
        "grid": {"T": 0.5, "steps": 200, "n": 128},
        "model": {
            "initial": "sin(x)*cos(2*y) + 0.5*cos(3*x + y) + 0.3*sin(2*x - 3*y)",
            "xi_stream": [
                "0.15*sin(x + 2*y) + 0.1*cos(3*x)",
                "0.125*cos(2*x - y) + 0.05*sin(y)",
            ],
        },
    },
    "wong_zakai_rde": {
        "scenario": "wong_zakai",
        "driver": {"kind": "fbm", "H": 0.45, "K": 2},
        "grid": {"T": 1.0, "steps": 16},
        "fields": {
            "dim": 2,
            "xi": [["sin(x2)", "0.5*cos(x1)"], ["0.3*x2", "-0.4*sin(x1)"]],
            "particles": [[-0.5, 0.2], [0.3, -0.7], [0.8, 0.9], [-0.9, -0.4]],
            "scheme": "magnus",
        },
        "wong_zakai": {
            "target": "rde",
            "base": 2,
            "ratio": 8,
            "levels": 4,
            "corruption_steps": [64, 256, 1024],
            "reference_steps": 16384,
        },
    },
    "wong_zakai_burgers": {
        "scenario": "wong_zakai",
        "driver": {"kind": "fbm", "H": 0.45, "K": 1},
        "grid": {"T": 1.0, "steps": 16, "n": 32},
        "model": {"initial": "0.25*sin(x)", "xi": ["0.1 + 0.05*sin(x)"]},
        "wong_zakai": {
            "target": "burgers",
            "base": 2,
            "ratio": 8,
            "levels": 4,
            "corruption_steps": [1024, 2048, 4096],
            "reference_steps": 16384,
        },
    },
}


def available_presets():
    return sorted(PRESETS)


def preset(name):
    """Deep copy of a named preset configuration."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(available_presets())}")
    return copy.deepcopy(PRESETS[name])


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate(cfg):
    """Reject unknown sections/keys and wrongly typed values."""
    for key, val in cfg.items():
        if key in SCHEMA:
            if not isinstance(val, dict):
                raise ConfigError(f"[{key}] must be a table")
            for sub, sval in val.items():
                types = SCHEMA[key].get(sub)
                if types is None:
                    raise ConfigError(f"unknown key {sub!r} in [{key}]; allowed: {sorted(SCHEMA[key])}")
                if isinstance(sval, bool) and bool not in types:
                    raise ConfigError(f"[{key}].{sub} has the wrong type")
                if not isinstance(sval, types):
                    raise ConfigError(f"[{key}].{sub} must be {' or '.join(t.__name__ for t in types)}")
        elif key in TOP_LEVEL:
            if not isinstance(val, TOP_LEVEL[key]) or isinstance(val, bool):
                raise ConfigError(f"{key} must be {TOP_LEVEL[key][0].__name__}")
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    scenario = cfg.get("scenario")
    if scenario is not None and scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    seed = cfg.get("seed", 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return cfg


def resolve(cfg, scenario=None, seed=None):
    """Apply the preset, the CLI overrides, and validate."""
    cfg = dict(cfg)
    validate(cfg)
    if "preset" in cfg:
        cfg = _merge(preset(cfg["preset"]), cfg)
    if scenario is not None:
        if cfg.get("scenario") not in (None, scenario) and scenario not in ("wong_zakai", "audit"):
            raise ConfigError(f"config is for scenario {cfg['scenario']!r}, not {scenario!r}")
        if scenario in ("wong_zakai", "audit") and cfg.get("scenario") not in (None, scenario):
            cfg["base_scenario"] = cfg["scenario"]
        cfg["scenario"] = scenario
    if "scenario" not in cfg:
        raise ConfigError("no scenario given")
    if seed is not None:
        cfg["seed"] = seed
        cfg.setdefault("driver", {})["seed"] = seed
    cfg.setdefault("seed", 0)
    return cfg


def load(filename):
    try:
        with open(filename, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{filename}: {exc}") from None
    return validate(data)
