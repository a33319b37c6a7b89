"""Run configuration: JSON schema, defaults and validation.

Every dimensional key carries its unit in the name (``_mhz``, ``_us``,
``_t``, ``_ghz``).  Unknown keys are rejected.  Parsed documents are merged
over :data:`DEFAULTS`; the resolved document is what output headers record.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .system import (GYROMAGNETIC_13C, REFERENCE_ELECTRON_SPLITTING, HyperfineCoupling, NuclearSpinModel,
                     SystemModel, larmor_frequency)

UNIT_SUFFIXES = ("_mhz", "_us", "_t", "_ghz", "_s", "_rad", "_mhz_per_t")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending key."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_BLOCK = {"type": "integer", "minimum": 8, "multipleOf": 8}
_BRANCH = {"enum": ["up", "down"]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


_GRID = {
    "oneOf": [
        _obj({"start_us": _NONNEG, "stop_us": _NONNEG, "points": {"type": "integer", "minimum": 1}},
             ("start_us", "stop_us", "points")),
        _obj({"values_us": {"type": "array", "items": _NONNEG, "minItems": 1}}, ("values_us",)),
    ]
}
_RANGE = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = _obj({
    "system": _obj({
        "f_larmor_mhz": _POS,
        "b_field_t": _NONNEG,
        "gyromagnetic_mhz_per_t": _POS,
        "electron_splitting_ghz": _POS,
        "spins": {"type": "array", "minItems": 1, "items": _obj(
            {"label": {"type": "string", "minLength": 1}, "a_par_mhz": {"type": "number"},
             "a_perp_mhz": _NONNEG}, ("label", "a_par_mhz", "a_perp_mhz"))},
    }, ("spins",)),
    "spectrum": _obj({"n_pulses": _BLOCK, "tau_grid_us": _GRID,
                      "noise_sigma": _NONNEG}),
    "fit": _obj({
        "input_csv": {"type": "string"},
        "n_pulses": _BLOCK,
        "a_par_bounds_mhz": _RANGE,
        "a_perp_bounds_mhz": _RANGE,
        "f_larmor_bounds_mhz": _RANGE,
        "grid_per_axis": {"type": "integer", "minimum": 2},
        "fixed_spins": {"type": "array", "items": {"type": "string"}},
    }),
    "design": _obj({"window_us": _RANGE, "steps": {"type": "integer", "minimum": 3},
                    "n_pulses": _BLOCK, "final_phases_rad": {"type": "array", "items": {"type": "number"},
                                                             "minItems": 1}}),
    "rabi": _obj({"n_prime_list": {"type": "array", "items": {"type": "integer", "minimum": 0, "multipleOf": 8},
                                   "minItems": 1},
                  "tau_prime_us": _POS, "tau_init_us": _POS, "n_init": _BLOCK, "final_phase_rad": {"type": "number"}}),
    "ramsey": _obj({"t_grid_us": _GRID, "branches": {"type": "array", "items": _BRANCH, "minItems": 1},
                    "tau_prime_us": _POS, "tau_init_us": _POS, "n_init": _BLOCK,
                    "final_phase_rad": {"type": "number"}}),
    "echo": _obj({"t_grid_us": _GRID, "tau_prime_us": _POS, "tau_init_us": _POS, "n_init": _BLOCK,
                  "final_phase_rad": {"type": "number"}, "synchronize": {"type": "boolean"}}),
    "trace": _obj({"n_pulses": _BLOCK, "tau_us": _POS, "spin": {"type": "string"},
                   "initial_bloch": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                   "samples_per_delay": {"type": "integer", "minimum": 1}}),
    "readout": _obj({"shots": {"type": "integer", "minimum": 0}, "mean_bright_counts": _POS}),
    "clock": _obj({"drift_factor": {"type": "number"}}),
    "seed": {"type": "integer", "minimum": 0},
    "threads": {"type": "integer", "minimum": 1},
    "output_dir": {"type": "string"},
}, ("system",))

DEFAULTS: dict = {
    "system": {"gyromagnetic_mhz_per_t": GYROMAGNETIC_13C, "electron_splitting_ghz": REFERENCE_ELECTRON_SPLITTING},
    "spectrum": {"n_pulses": 16, "tau_grid_us": {"start_us": 1.50, "stop_us": 1.65, "points": 301},
                 "noise_sigma": 0.0},
    "fit": {"n_pulses": 16, "a_par_bounds_mhz": [0.0, 0.3], "a_perp_bounds_mhz": [0.05, 0.6],
            "f_larmor_bounds_mhz": [1.35, 1.48], "grid_per_axis": 20, "fixed_spins": []},
    "design": {"window_us": [1.55, 1.60], "steps": 51, "n_pulses": 16, "final_phases_rad": [math.pi, 0.0]},
    "rabi": {"n_prime_list": [0, 8, 16, 24, 32, 40, 48, 56, 64], "tau_prime_us": 1.578, "tau_init_us": 1.569,
             "n_init": 16, "final_phase_rad": math.pi},
    "ramsey": {"t_grid_us": {"start_us": 0.0, "stop_us": 5.0, "points": 126}, "branches": ["up", "down"],
               "tau_prime_us": 1.578, "tau_init_us": 1.569, "n_init": 16, "final_phase_rad": math.pi},
    "echo": {"t_grid_us": {"start_us": 0.0, "stop_us": 10000.0, "points": 51}, "tau_prime_us": 1.578,
             "tau_init_us": 1.569, "n_init": 16, "final_phase_rad": math.pi, "synchronize": False},
    "trace": {"n_pulses": 8, "tau_us": 0.169, "initial_bloch": [0.0, 0.0, -1.0], "samples_per_delay": 50},
    "readout": {"shots": 0, "mean_bright_counts": 0.05},
    "clock": {"drift_factor": 1.25e-5},
    "seed": 0,
    "threads": 1,
    "output_dir": "out",
}


@dataclass(frozen=True)
class RunConfig:
    system: SystemModel
    resolved: dict
    notes: tuple[str, ...] = field(default=())

    def section(self, name: str) -> dict:
        return self.resolved[name]

    @property
    def seed(self) -> int:
        return self.resolved["seed"]

    @property
    def threads(self) -> int:
        return self.resolved["threads"]

    @property
    def output_dir(self) -> Path:
        return Path(self.resolved["output_dir"])

    def with_overrides(self, seed: int | None = None, threads: int | None = None,
                       output_dir: str | None = None) -> "RunConfig":
        """Apply command-line overrides (seed, thread count, output directory)."""
        doc = copy.deepcopy(self.resolved)
        if seed is not None:
            if seed < 0:
                raise ConfigError("seed must be >= 0", "seed")
            doc["seed"] = int(seed)
        if threads is not None:
            if threads < 1:
                raise ConfigError("threads must be >= 1", "threads")
            doc["threads"] = int(threads)
        if output_dir is not None:
            doc["output_dir"] = str(output_dir)
        return RunConfig(self.system, doc, self.notes)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and not _is_grid(v):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_grid(v: dict) -> bool:
    return "values_us" in v or "start_us" in v


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _describe(err: jsonschema.ValidationError) -> str:
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        hints = []
        for key in extra:
            with_unit = [a for a in allowed if any(a == key + s for s in UNIT_SUFFIXES)]
            if with_unit:
                hints.append(f"{key!r} is missing its unit suffix (expected {with_unit[0]!r})")
            else:
                hints.append(f"unknown key {key!r}")
        return "; ".join(hints)
    if err.validator == "oneOf" and isinstance(err.instance, dict):
        return "grid must be {start_us, stop_us, points} or {values_us}"
    return err.message


def _grid(spec: dict, path: str) -> np.ndarray:
    if "values_us" in spec:
        vals = np.asarray(spec["values_us"], dtype=float)
    else:
        lo, hi, n = spec["start_us"], spec["stop_us"], spec["points"]
        if hi < lo:
            raise ConfigError("stop_us must be >= start_us", path)
        vals = np.linspace(lo, hi, n)
    if np.any(np.diff(vals) < 0):
        raise ConfigError("grid values must be sorted ascending", path)
    return vals


def grid_values(config: RunConfig, section: str, key: str) -> np.ndarray:
    return _grid(config.resolved[section][key], f"{section}/{key}")


def _range(values, path: str, positive: bool = False) -> tuple[float, float]:
    lo, hi = float(values[0]), float(values[1])
    if lo > hi:
        raise ConfigError("range must satisfy lo <= hi", path)
    if positive and lo <= 0:
        raise ConfigError("range must be positive", path)
    return lo, hi


def parse_config(document) -> RunConfig:
    """Validate a JSON document (text, bytes or already-decoded dict) into a :class:`RunConfig`."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError("top level must be an object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_describe(err), _path(err))

    resolved = _merge(DEFAULTS, document)
    sysdoc = resolved["system"]
    notes = []
    if "f_larmor_mhz" in sysdoc:
        f_l = sysdoc["f_larmor_mhz"]
    elif "b_field_t" in sysdoc:
        f_l = larmor_frequency(sysdoc["b_field_t"], sysdoc["gyromagnetic_mhz_per_t"])
        notes.append(f"system/f_larmor_mhz defaulted to gyromagnetic_mhz_per_t * b_field_t = "
                     f"{sysdoc['gyromagnetic_mhz_per_t']} * {sysdoc['b_field_t']} = {f_l!r}")
        sysdoc["f_larmor_mhz"] = f_l
    else:
        raise ConfigError("either f_larmor_mhz or b_field_t is required", "system")
    try:
        spins = tuple(NuclearSpinModel(s["label"], HyperfineCoupling(s["a_par_mhz"], s["a_perp_mhz"]))
                      for s in sysdoc["spins"])
        system = SystemModel(f_l, spins, sysdoc["electron_splitting_ghz"], sysdoc.get("b_field_t"),
                             sysdoc["gyromagnetic_mhz_per_t"], tuple(notes))
    except ValueError as exc:
        raise ConfigError(str(exc), "system") from None

    if np.any(_grid(resolved["spectrum"]["tau_grid_us"], "spectrum/tau_grid_us") <= 0):
        raise ConfigError("tau values must be positive", "spectrum/tau_grid_us")
    for sec in ("ramsey", "echo"):
        _grid(resolved[sec]["t_grid_us"], f"{sec}/t_grid_us")
    _range(resolved["design"]["window_us"], "design/window_us", positive=True)
    for key, positive in (("a_par_bounds_mhz", False), ("a_perp_bounds_mhz", False),
                          ("f_larmor_bounds_mhz", True)):
        _range(resolved["fit"][key], f"fit/{key}", positive)
    if resolved["fit"]["a_perp_bounds_mhz"][0] < 0:
        raise ConfigError("a_perp bounds must be >= 0", "fit/a_perp_bounds_mhz")
    for label in resolved["fit"]["fixed_spins"]:
        if label not in system.labels:
            raise ConfigError(f"unknown spin label {label!r}", "fit/fixed_spins")
    if "spin" in resolved["trace"] and resolved["trace"]["spin"] not in system.labels:
        raise ConfigError(f"unknown spin label {resolved['trace']['spin']!r}", "trace/spin")
    if abs(np.linalg.norm(resolved["trace"]["initial_bloch"]) - 1) > 1e-9:
        raise ConfigError("initial_bloch must be a unit vector", "trace/initial_bloch")
    if not abs(resolved["clock"]["drift_factor"]) < 1e-3:
        raise ConfigError("|drift_factor| must be < 1e-3", "clock/drift_factor")
    return RunConfig(system, resolved, tuple(notes))


def load_config(path) -> RunConfig:
    """Read and parse a JSON config file.  I/O problems propagate as OSError."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text)
