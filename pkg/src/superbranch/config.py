"""Experiment configuration: schema validation, defaults, canonical hashing.

One JSON file describes a full experiment (Monte Carlo runs over a beta
ladder plus the deterministic reference and tolerance block).  Unknown keys
are rejected by the schema; every output produced from a config embeds the
sha256 hash of the fully resolved document so mismatched artifacts can be
refused at comparison time.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema

from .engine import RunSpec
from .functions import BoundaryFunction
from .recipes import BranchingRecipe, RescalingKind


class ConfigError(ValueError):
    """Invalid or schema-violating experiment configuration."""


_BOUNDARY_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"enum": ["cosine", "exponential", "polynomial", "constant"]},
        "a": {"type": "number"},
        "omega": {"type": "number"},
        "phase": {"type": "number"},
        "offset": {"type": "number"},
        "lam": {"type": "number"},
        "coeffs": {"type": "array", "items": {"type": "number"}},
        "c": {"type": "number"},
    },
    "required": ["family"],
    "additionalProperties": False,
}

_RECIPE_SCHEMA = {
    "type": "object",
    "properties": {
        "entries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "branching": {"type": "string"},
                    "probability": {"type": "string"},
                },
                "required": ["branching", "probability"],
                "additionalProperties": False,
            },
        },
        "intensity_coeff": {"type": ["string", "integer"]},
        "intensity_exponent": {"type": "integer", "minimum": 0},
    },
    "required": ["entries"],
    "additionalProperties": False,
}

_ORACLE_SCHEMA = {
    "type": "object",
    "properties": {
        "period": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "integer", "minimum": 16},
        "dt_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.4},
        "nonlinearity": {"type": "string"},
    },
    "additionalProperties": False,
}

_TOLERANCE_SCHEMA = {
    "type": "object",
    "properties": {
        "z_max": {"type": "number", "exclusiveMinimum": 0},
        "abs": {"type": "number", "minimum": 0},
        "rel": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "mode": {"enum": ["mckean", "super"]},
        "recipe": {"oneOf": [_RECIPE_SCHEMA, {"type": "null"}]},
        "target": {"type": ["string", "null"]},
        "ansatz": {"type": "array", "items": {"type": "string"}},
        "rescaling": {"type": "string"},
        "tag_convention": {"enum": ["paper", "direct"]},
        "boundary": _BOUNDARY_SCHEMA,
        "points": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "betas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "population_cap": {"type": "integer", "minimum": 1},
        "override_existence": {"type": "boolean"},
        "bootstrap": {"type": "boolean"},
        "workers": {"type": ["integer", "null"], "minimum": 1},
        "oracle": _ORACLE_SCHEMA,
        "tolerances": _TOLERANCE_SCHEMA,
        "output": {
            "type": "object",
            "properties": {
                "csv": {"type": ["string", "null"]},
                "json": {"type": ["string", "null"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["mode", "boundary", "horizon"],
    "additionalProperties": False,
}

_DEFAULTS = {
    "recipe": None,
    "target": None,
    "ansatz": [],
    "rescaling": "type1",
    "tag_convention": "paper",
    "points": [0.0],
    "betas": [],
    "replicas": 10000,
    "seed": 0,
    "population_cap": 10**6,
    "override_existence": False,
    "bootstrap": False,
    "workers": None,
    "oracle": {},
    "tolerances": {},
    "output": {},
}

_ORACLE_DEFAULTS = {"period": 25.132741228718345, "points": 256, "dt_factor": 0.3,
                    "nonlinearity": "auto"}
_TOLERANCE_DEFAULTS = {"z_max": 3.0, "abs": 1e-3, "rel": 0.0}
_OUTPUT_DEFAULTS = {"csv": None, "json": None}


@dataclass
class ExperimentConfig:
    """A validated, fully resolved experiment description."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None) -> "ExperimentConfig":
        """Validate, apply CLI overrides, and fill every default."""
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as err:
            raise ConfigError(f"config schema violation: {err.message}") from err
        data = copy.deepcopy(raw)
        if overrides:
            for key, value in overrides.items():
                if value is not None:
                    data[key] = value
        for key, value in _DEFAULTS.items():
            data.setdefault(key, copy.deepcopy(value))
        data["oracle"] = {**_ORACLE_DEFAULTS, **data["oracle"]}
        data["tolerances"] = {**_TOLERANCE_DEFAULTS, **data["tolerances"]}
        data["output"] = {**_OUTPUT_DEFAULTS, **data["output"]}
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as err:
            raise ConfigError(f"resolved config invalid: {err.message}") from err
        cfg = cls(data)
        cfg._cross_validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw, overrides)

    def _cross_validate(self):
        d = self.data
        if d["mode"] == "super":
            if d["recipe"] is None and d["target"] is None:
                raise ConfigError("super mode needs a recipe or a target nonlinearity")
            if not d["betas"]:
                raise ConfigError("super mode needs a nonempty beta list")
        try:
            RescalingKind.from_label(d["rescaling"])
            self.boundary()
            if d["recipe"] is not None:
                BranchingRecipe.from_json(d["recipe"])
        except (ValueError, KeyError, TypeError) as err:
            raise ConfigError(str(err)) from err

    # -- derived objects ----------------------------------------------

    def boundary(self) -> BoundaryFunction:
        return BoundaryFunction.from_json(self.data["boundary"])

    def recipe(self) -> BranchingRecipe | None:
        if self.data["recipe"] is None:
            return None
        return BranchingRecipe.from_json(self.data["recipe"])

    def rescaling(self) -> RescalingKind:
        return RescalingKind.from_label(self.data["rescaling"])

    def run_spec(self, *, beta: float | None = None, x: float | None = None) -> RunSpec:
        """RunSpec for one (beta, x) cell of the experiment."""
        d = self.data
        return RunSpec(
            mode=d["mode"],
            boundary=self.boundary(),
            x=d["points"][0] if x is None else x,
            horizon=d["horizon"],
            replicas=d["replicas"],
            master_seed=d["seed"],
            recipe=self.recipe() if d["mode"] == "super" else None,
            beta=beta,
            rescaling=self.rescaling(),
            population_cap=d["population_cap"],
            tag_convention=d["tag_convention"],
            override_existence=d["override_existence"],
            bootstrap=d["bootstrap"],
        )

    @property
    def hash(self) -> str:
        """sha256 over the canonical (sorted, compact) resolved document."""
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def to_json(self) -> dict:
        return copy.deepcopy(self.data)
