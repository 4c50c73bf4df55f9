"""Experiment config documents: JSON, schema-validated, unknown keys rejected.

Every section is optional; present values override built-in defaults. The
resolved values are echoed into each report's JSON sidecar.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .encoder import ConvLayer, TrainConfig
from .errors import ConfigError
from .grid import FAMILY_KINDS
from .masking import MaskConfig
from .rl import QLearnConfig

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "root": {"type": "string"},
                "train_families": {"type": "array", "items": {"enum": list(FAMILY_KINDS)}},
                "eval_families": {"type": "array", "items": {"enum": list(FAMILY_KINDS)}},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "minimum": 0},
                "optimizer": {"enum": ["sgd", "adam"]},
                "beta1": {"type": "number"},
                "beta2": {"type": "number"},
                "adam_eps": {"type": "number"},
                "weighting": {"enum": ["uniform", "gaussian"]},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "stop_loss": {"type": ["number", "null"]},
            },
        },
        "mask": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "dilation_radius": {"type": "integer", "minimum": 0},
                "fallback": {"enum": ["full_grid", "fail"]},
            },
        },
        "planner": {"enum": ["dijkstra", "astar"]},
        "rl": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number"},
                "gamma": {"type": "number"},
                "episodes": {"type": "integer", "minimum": 1},
                "eps_start": {"type": "number"},
                "eps_end": {"type": "number"},
                "eps_fraction": {"type": "number"},
                "eval_episodes": {"type": "integer", "minimum": 1},
                "size": {"type": "integer", "minimum": 3},
                "clutter": {"type": "number", "minimum": 0, "maximum": 0.4},
                "k": {"type": "integer", "minimum": 0},
            },
        },
        "arch": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "prefixItems": [
                    {"type": "integer", "minimum": 1},
                    {"type": "integer", "minimum": 1},
                    {"enum": ["relu", "logistic"]},
                ],
                "minItems": 3,
                "maxItems": 3,
            },
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    },
}


def validate_config(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "document root"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return doc


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return validate_config(doc)


def train_config_from(doc: dict, base: TrainConfig | None = None, **overrides) -> TrainConfig:
    """Resolve a TrainConfig: package defaults (or `base`), then the config
    document's train section, then explicit overrides."""
    merged = dict(vars(base)) if base is not None else {}
    merged.update(doc.get("train", {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


def mask_config_from(doc: dict, **overrides) -> MaskConfig:
    merged = dict(doc.get("mask", {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return MaskConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad mask config: {exc}") from exc


def qlearn_config_from(doc: dict, **overrides) -> QLearnConfig:
    section = dict(doc.get("rl", {}))
    for key in ("eval_episodes", "size", "clutter", "k"):
        section.pop(key, None)
    section.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return QLearnConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad rl config: {exc}") from exc


def arch_from(doc: dict) -> tuple[ConvLayer, ...] | None:
    if "arch" not in doc:
        return None
    return tuple(ConvLayer(in_ch, out_ch, act) for in_ch, out_ch, act in doc["arch"])
