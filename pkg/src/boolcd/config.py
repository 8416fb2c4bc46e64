"""INI-style run configuration.

Values resolve as: command-line flag, then config file, then the built-in
default below. The seed additionally falls back to ``BOOLCD_SEED`` before
the default of 0. A manifest.json from an earlier run is accepted in place
of an INI file.
"""
from __future__ import annotations

import configparser
import copy
import json
import os
from pathlib import Path

from .exceptions import ConfigError

SEED_ENV = "BOOLCD_SEED"

DEFAULTS = {
    "run": {"seed": None, "threads": None},
    "reservoir": {
        "n_nodes": 100, "spectral_radius": 0.9, "leak_rate": 1.0, "input_scale": 2.0,
        "connectivity": 0.1, "bias_scale": 1.0,
    },
    "task": {
        "kind": "mackey_glass", "t_train": 1000, "t_test": 500, "washout": 100,
        "target_norm": "minmax", "readout_gain": 1.0, "binary": False,
        "state_file": "", "target_file": "", "test_state_file": "", "test_target_file": "",
    },
    "descent": {
        "policy": "greedy", "minimizers": 1, "max_epochs": 1_000_000, "epsilon": 0.0,
        "init_density": 0.5, "stop_on_local_min": True,
    },
    "sweep": {
        "sizes": "64,128,256,512,961", "minimizers": 8, "policies": "markovian,greedy",
        "task": "mackey_glass", "max_epochs": 1_000_000, "epsilon": 0.0,
        "target_norm": "zscore",
    },
    "theory": {
        "n": 8, "t": 16, "instances": 10, "trials": 5, "kappa_mode": "exact_vertex",
        "policy": "markovian", "distribution": "uniform01", "noise_std": 0.1, "eta": "",
        "beta_sizes": "100,200,400,800", "beta_trials": 20, "beta_distribution": "abs_gaussian",
        "state_file": "", "target_file": "",
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, raw):
    default = DEFAULTS[section][key]
    if raw is None or not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int) or (default is None):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None
    return text


def defaults() -> dict:
    return copy.deepcopy(DEFAULTS)


def load(path=None) -> dict:
    """Defaults overlaid with the contents of ``path`` (INI or manifest JSON)."""
    cfg = defaults()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    if p.suffix == ".json":
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        sections = data.get("config", data)
        if not isinstance(sections, dict):
            raise ConfigError(f"{path}: no config mapping")
        items = [(s, k, v) for s, body in sections.items() for k, v in body.items()]
    else:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        try:
            parser.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        items = [(s, k, parser.get(s, k)) for s in parser.sections() for k in parser[s]]
    for section, key, value in items:
        if section not in cfg:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if key not in cfg[section]:
            raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        cfg[section][key] = _coerce(section, key, value)
    return cfg


def override(cfg: dict, section: str, key: str, value) -> None:
    """Apply a command-line value; None means the flag was not given."""
    if value is None:
        return
    if key not in cfg.get(section, {}):
        raise ConfigError(f"unknown setting [{section}] {key}")
    cfg[section][key] = _coerce(section, key, value) if isinstance(value, str) else value


def resolve_seed(cfg: dict, flag=None) -> int:
    if flag is not None:
        seed = flag
    elif cfg["run"]["seed"] is not None:
        seed = cfg["run"]["seed"]
    elif os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    else:
        seed = 0
    seed = int(seed)
    if not 0 <= seed < 2**63:
        raise ConfigError("seed must be a nonnegative 63-bit integer")
    cfg["run"]["seed"] = seed
    return seed


def int_list(text: str, name: str) -> list:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated integers, got {text!r}") from None


def str_list(text: str) -> list:
    return [v.strip() for v in str(text).split(",") if v.strip()]
