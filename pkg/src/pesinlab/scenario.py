"""Scenario files: a TOML table naming a map, an experiment, its parameters and a seed."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import SchemaError
from .maps import complex_to_str, map_from_dict, parse_complex

OUTPUT_ENV = "PESINLAB_OUTPUT_DIR"
NAN = float("nan")

# parameter kinds: int, float, bool, str, complex, floats, strs, complexes;
# a complex default of None is written "auto" and chosen at run time
SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "lyapunov": {
        "methods": ("strs", ["quadrature", "forward"]),
        "n": ("int", 1_000_000),
        "n_chains": ("int", 1),
        "x0": ("complex", None),
        "n_quad": ("int", 1024),
        "tolerance": ("float", 5e-3),
        "relative_tolerance": ("float", 0.0),
        "expected": ("float", NAN),
    },
    "hmeasure": {
        "domain": ("str", "slit_plane"),
        "alpha": ("float", 0.25),
        "basepoint": ("complex", 1 + 0j),
        "target_center": ("complex", 0j),
        "radii": ("floats", [0.1, 0.01, 0.001, 0.0001]),
        "n_walks": ("int", 100_000),
        "backend": ("str", "wos"),
        "splitting": ("bool", False),
        "expected_slope": ("float", NAN),
        "slope_tolerance": ("float", 0.05),
        "n_domains": ("int", 20),
        "closed_form_tolerance": ("float", 1e-12),
        "max_seconds": ("float", 0.0),
    },
    "backward": {
        "x0": ("complex", None),
        "depth": ("int", 40),
        "mode": ("str", "plane_equal_weight"),
        "n_chains": ("int", 1),
        "arc_center": ("float", 0.0),
        "arc_length": ("float", 0.0),
        "visit_factor": ("float", 2.0),
    },
    "tower": {
        "n_towers": ("int", 32),
        "depth": ("int", 40),
        "mode": ("str", "plane_equal_weight"),
        "eta": ("float", NAN),
        "M": ("float", NAN),
        "chi": ("float", NAN),
        "chi_chains": ("int", 64),
        "chi_depth": ("int", 4000),
        "slope_tolerance": ("float", 0.15),
        "residual_tolerance": ("float", 1e-8),
    },
    "periodic": {
        "cover": ("str", "rays"),
        "n_disks": ("int", 16),
        "radius": ("float", 0.2),
        "centers": ("complexes", []),
        "budget": ("int", 256),
        "max_depth": ("int", 20),
        "min_hits": ("int", 14),
        "max_seconds": ("float", 0.0),
    },
    "return_map": {
        "arc_center": ("float", math.pi / 8),
        "arc_length": ("float", math.pi / 4),
        "n_trials": ("int", 100_000),
        "checks": ("strs", ["kac", "identity"]),
        "kac_tolerance": ("float", 0.05),
        "identity_tolerance": ("float", 0.02),
        "tower_depth": ("int", 0),
        "n_cells": ("int", 8),
        "cell_index": ("int", 0),
    },
    "rho_check": {
        "n_configs": ("int", 10_000),
        "n_samples": ("int", 256),
        "thin_families": ("bool", True),
    },
    "inner": {
        "checks": ("strs", ["classify"]),
        "xi": ("complex", 1 + 0j),
        "alphas": ("floats", [math.pi / 8, math.pi / 4]),
        "stolz_length": ("float", 0.5),
        "n_samples": ("int", 256),
        "measure": ("str", "lebesgue"),
        "invariance_tolerance": ("float", 1e-8),
        "n_quad": ("int", 4096),
    },
}

CHOICES = {
    ("lyapunov", "methods"): {"quadrature", "forward", "backward", "green"},
    ("hmeasure", "domain"): {"unit_disk", "sector", "slit_plane", "star"},
    ("hmeasure", "backend"): {"riemann", "wos", "both"},
    ("backward", "mode"): {"plane_equal_weight", "circle_transfer"},
    ("tower", "mode"): {"plane_equal_weight", "circle_transfer"},
    ("periodic", "cover"): {"rays", "explicit"},
    ("return_map", "checks"): {"kac", "identity"},
    ("inner", "checks"): {"classify", "stolz", "invariance"},
    ("inner", "measure"): {"lebesgue", "lambda_R"},
}

# experiments whose runner needs no map
MAPLESS = {"hmeasure", "rho_check"}
TOP_KEYS = {"name", "experiment", "seed", "output_dir", "map", "params"}


@dataclass
class Scenario:
    experiment: str
    seed: int
    params: dict
    map: object = None
    map_table: dict | None = None
    output_dir: str = ""
    name: str = ""
    source: dict = field(default_factory=dict, repr=False)

    def canonical(self) -> dict:
        """Plain-data form with defaults filled in (output_dir excluded)."""
        out = {"experiment": self.experiment, "seed": self.seed, "name": self.name,
               "params": {k: _dump_value(SCHEMAS[self.experiment][k][0], v) for k, v in sorted(self.params.items())}}
        if self.map_table is not None:
            out["map"] = self.map_table
        return out

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), allow_nan=True)
        return hashlib.sha256(text.encode()).hexdigest()

    def resolved_output_dir(self) -> Path:
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return Path(env)
        return Path(self.output_dir or f"out/{self.name or self.experiment}")


def _dump_value(kind, value):
    if kind == "complex":
        return "auto" if value is None else complex_to_str(value)
    if kind == "complexes":
        return [complex_to_str(v) for v in value]
    if kind == "float" and isinstance(value, float) and math.isnan(value):
        return "nan"
    return value


def _parse_value(kind, value, path):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError("expected an integer", path)
        return value
    if kind == "float":
        if isinstance(value, str) and value.strip().lower() == "nan":
            return NAN
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError("expected a number", path)
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise SchemaError("expected true or false", path)
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise SchemaError("expected a string", path)
        return value
    if kind == "complex":
        if isinstance(value, str) and value.strip() == "auto":
            return None
        return parse_complex(value, path)
    if not isinstance(value, list):
        raise SchemaError("expected an array", path)
    inner = {"floats": "float", "strs": "str", "complexes": "complex"}[kind]
    return [_parse_value(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]


def validate_params(experiment: str, raw: dict, path="params") -> dict:
    if not isinstance(raw, dict):
        raise SchemaError("expected a table", path)
    schema = SCHEMAS[experiment]
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise SchemaError("unknown key", f"{path}.{key}")
        out[key] = _parse_value(schema[key][0], value, f"{path}.{key}")
    for key, (kind, default) in schema.items():
        if key not in out:
            out[key] = list(default) if isinstance(default, list) else default
        allowed = CHOICES.get((experiment, key))
        if allowed is not None:
            vals = out[key] if isinstance(out[key], list) else [out[key]]
            for v in vals:
                if v not in allowed:
                    raise SchemaError(f"{v!r} is not one of {sorted(allowed)}", f"{path}.{key}")
        if kind == "int" and out[key] < 0:
            raise SchemaError("must be non-negative", f"{path}.{key}")
    return out


def scenario_from_dict(data: dict) -> Scenario:
    for key in data:
        if key not in TOP_KEYS:
            raise SchemaError("unknown key", key)
    experiment = data.get("experiment")
    if experiment is None:
        raise SchemaError("missing key", "experiment")
    if experiment not in SCHEMAS:
        raise SchemaError(f"unknown experiment {experiment!r}", "experiment")
    if "seed" not in data:
        raise SchemaError("missing key", "seed")
    seed = data["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise SchemaError("seed must be an integer in [0, 2^64)", "seed")
    params = validate_params(experiment, data.get("params", {}))
    map_table = data.get("map")
    fmap = None
    if map_table is None:
        if experiment not in MAPLESS:
            raise SchemaError("missing key", "map")
    else:
        fmap = map_from_dict(map_table, "map")
        map_table = fmap.to_dict()
    for key in ("name", "output_dir"):
        if key in data and not isinstance(data[key], str):
            raise SchemaError("expected a string", key)
    return Scenario(experiment, seed, params, fmap, map_table, data.get("output_dir", ""), data.get("name", ""), data)


def parse_scenario(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"malformed scenario text: {exc}") from exc
    return scenario_from_dict(data)


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def serialize_scenario(s: Scenario) -> str:
    data = s.canonical()
    if not data["name"]:
        data.pop("name")
    data["params"] = {k: (v if not (isinstance(v, float) and math.isnan(v)) else "nan")
                      for k, v in data["params"].items()}
    if s.output_dir:
        data["output_dir"] = s.output_dir
    return tomli_w.dumps(data)
