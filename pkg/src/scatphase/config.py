"""Default tolerances and calibrated constants, plus the run-configuration loader."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

# Shared constant of the U,V and sup|q| estimates: twice the largest observed
# ratio over the builtin catalog (see calibration.calibrate_constant).
CALIBRATED_C = 0.3604

# Tolerances a run may override (--tol-override KEY=VAL); module defaults otherwise.
TOLERANCES = {
    "marchenko_tol": 1e-8,
    "tail_rel": 1e-8,
    "sin_floor": 1e-6,
    "tikhonov": 1e-12,
    "gap_tol": 1e-2,
    "damping": 0.5,
}

COMMANDS = ("forward", "spectrum", "invert", "catastrophe", "phase-recon", "family")
BUILTINS = ("zero", "gaussian_well", "square_well", "sech2", "soliton_data")

DEFAULT_GRID = {"L": 20.0, "N": 1024}
DEFAULT_BAND = {"k_min": 0.01, "k_max": 40.0, "n_k": 400}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    """One CLI run.  ``potential`` is {"builtin": name, "params": {...}} or {"path": csv}."""

    command: str
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    potential: dict = field(default_factory=lambda: {"builtin": "zero", "params": {}})
    band: dict = field(default_factory=lambda: dict(DEFAULT_BAND))
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))
    out: str = "out"
    seed: int = 0
    options: dict = field(default_factory=dict)  # command-specific settings
    source: Optional[str] = None

    def echo(self) -> dict:
        return {
            "command": self.command,
            "grid": self.grid,
            "potential": self.potential,
            "band": self.band,
            "tolerances": self.tolerances,
            "out": self.out,
            "seed": self.seed,
            "options": self.options,
            "source": self.source,
        }


def _mapping(doc: Any, key: str) -> dict:
    v = doc.get(key, {}) if isinstance(doc, dict) else {}
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(f"'{key}' must be a mapping")
    return v


def _number(v: Any, what: str, kind=float) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"{what} must be a number, got {v!r}")
    try:
        x = kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {v!r}") from None
    if kind is int and x != v and not (isinstance(v, str) and str(x) == v.strip()):
        raise ConfigError(f"{what} must be an integer, got {v!r}")
    if not math.isfinite(x):
        raise ConfigError(f"{what} must be finite")
    return x


def parse_override(text: str) -> tuple[str, float]:
    key, sep, val = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"tolerance override must read KEY=VAL, got {text!r}")
    return key.strip(), _number(val, f"tolerance {key.strip()}")


def load_config(path: Optional[str], command: str, overrides: Optional[dict] = None) -> RunConfig:
    """Read the YAML document at ``path`` (if any), apply CLI overrides and validate."""
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a mapping")
    overrides = overrides or {}
    known = {"command", "grid", "potential", "band", "tolerances", "out", "seed", "options"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if doc.get("command") not in (None, command):
        raise ConfigError(f"config is for command {doc['command']!r}, not {command!r}")
    cfg = RunConfig(command=command, source=None if path is None else str(path))
    cfg.grid.update(_mapping(doc, "grid"))
    cfg.band.update(_mapping(doc, "band"))
    pot = _mapping(doc, "potential")
    if pot:
        cfg.potential = copy.deepcopy(pot)
    cfg.tolerances.update(_mapping(doc, "tolerances"))
    cfg.options = copy.deepcopy(_mapping(doc, "options"))
    if "out" in doc:
        cfg.out = str(doc["out"])
    if "seed" in doc:
        cfg.seed = doc["seed"]
    for key, val in overrides.get("grid", {}).items():
        cfg.grid[key] = val
    for key, val in overrides.get("band", {}).items():
        cfg.band[key] = val
    for key, val in overrides.get("tolerances", {}).items():
        cfg.tolerances[key] = val
    if overrides.get("out") is not None:
        cfg.out = overrides["out"]
    if overrides.get("seed") is not None:
        cfg.seed = overrides["seed"]
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if set(cfg.grid) - {"L", "N"}:
        raise ConfigError(f"unknown grid keys: {sorted(set(cfg.grid) - {'L', 'N'})}")
    cfg.grid["L"] = _number(cfg.grid["L"], "grid.L")
    cfg.grid["N"] = int(_number(cfg.grid["N"], "grid.N", int))
    n = cfg.grid["N"]
    if cfg.grid["L"] <= 0:
        raise ConfigError("grid.L must be positive")
    if n < 16 or n & (n - 1):
        raise ConfigError(f"grid.N must be a power of two >= 16, got {n}")
    if set(cfg.band) - set(DEFAULT_BAND):
        raise ConfigError(f"unknown band keys: {sorted(set(cfg.band) - set(DEFAULT_BAND))}")
    cfg.band["k_min"] = _number(cfg.band["k_min"], "band.k_min")
    cfg.band["k_max"] = _number(cfg.band["k_max"], "band.k_max")
    cfg.band["n_k"] = int(_number(cfg.band["n_k"], "band.n_k", int))
    if not 0 < cfg.band["k_min"] < cfg.band["k_max"] or cfg.band["n_k"] < 4:
        raise ConfigError("band needs 0 < k_min < k_max and n_k >= 4")
    for key, val in list(cfg.tolerances.items()):
        if key not in TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}; known: {sorted(TOLERANCES)}")
        v = _number(val, f"tolerance {key}")
        if v <= 0:
            raise ConfigError(f"tolerance {key} must be positive")
        cfg.tolerances[key] = v
    cfg.seed = int(_number(cfg.seed, "seed", int))
    pot = cfg.potential
    if not isinstance(pot, dict) or ("builtin" in pot) == ("path" in pot):
        raise ConfigError("potential needs exactly one of 'builtin' or 'path'")
    if "builtin" in pot:
        if pot["builtin"] not in BUILTINS:
            raise ConfigError(f"unknown builtin {pot['builtin']!r}; choose from {list(BUILTINS)}")
        params = pot.setdefault("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("potential.params must be a mapping")
        pot["params"] = params
    elif not isinstance(pot["path"], str):
        raise ConfigError("potential.path must be a string")
    if not isinstance(cfg.options, dict):
        raise ConfigError("options must be a mapping")
