"""Experiment configuration: JSON documents validated against a per-task
key schema. Unknown keys are rejected and every error names the offending
JSON path. Precedence is CLI flags > config file > defaults.
"""

from __future__ import annotations

import json

from .cells import CELL_KINDS


class ConfigError(ValueError):
    pass


_COMMON = {
    "task": str,
    "cell": str,
    "hidden": int,
    "seed": int,
    "lr": float,
    "eta": float,
    "lam": float,
    "inner_steps": int,
    "boundary": str,
    "backend": str,
}

_SUPERVISED = {
    "batch_size": int,
    "epochs": int,
    "max_steps": int,
    "eval_every": int,
    "log_every": int,
}

SCHEMAS = {
    "retrieval": {**_COMMON, **_SUPERVISED, "pairs": int, "data_dir": str},
    "glimpse": {
        **_COMMON,
        **_SUPERVISED,
        "mnist_dir": str,
        "program": str,
        "image_size": int,
        "patch": int,
        "valid_count": int,
    },
    "catch": {
        **_COMMON,
        "n": int,
        "m": int,
        "dense": int,
        "episodes_per_update": int,
        "max_env_steps": int,
        "beta2": float,
        "lr_half_every": int,
        "value_coef": float,
        "entropy_coef": float,
        "clip_norm": float,
        "eval_every_updates": int,
        "eval_episodes": int,
    },
}

DEFAULTS = {
    "retrieval": {
        "cell": "fast",
        "hidden": 50,
        "seed": 0,
        "lr": 1e-3,
        "eta": 0.5,
        "lam": 0.9,
        "inner_steps": 1,
        "boundary": "sustained",
        "backend": "attention",
        "batch_size": 128,
        "epochs": 20,
        "eval_every": 500,
        "log_every": 50,
        "pairs": 4,
    },
    "glimpse": {
        "cell": "fast",
        "hidden": 100,
        "seed": 0,
        "lr": 1e-3,
        "eta": 0.5,
        "lam": 0.95,
        "inner_steps": 1,
        "boundary": "sustained",
        "backend": "attention",
        "batch_size": 128,
        "epochs": 10,
        "eval_every": 500,
        "log_every": 50,
        "program": "repeat24",
        "image_size": 28,
        "patch": 7,
        "valid_count": 10000,
    },
    "catch": {
        "cell": "fast",
        "hidden": 128,
        "dense": 128,
        "seed": 0,
        "lr": 3e-3,
        "eta": 0.5,
        "lam": 0.95,
        "inner_steps": 1,
        "boundary": "sustained",
        "backend": "attention",
        "n": 16,
        "m": 3,
        "episodes_per_update": 16,
        "max_env_steps": 200_000,
        "beta2": 0.999,
        "lr_half_every": 0,
        "value_coef": 0.5,
        "entropy_coef": 0.01,
        "clip_norm": 1.0,
        "eval_every_updates": 100,
        "eval_episodes": 200,
    },
}


def validate_config(doc: dict, task: str | None = None) -> dict:
    """Validate a config document and fill defaults; returns the resolved dict."""
    if not isinstance(doc, dict):
        raise ConfigError("$: config must be a JSON object")
    task = doc.get("task", task)
    if task is None:
        raise ConfigError("$.task: missing")
    if task not in SCHEMAS:
        raise ConfigError(f"$.task: unknown task {task!r}, expected one of {sorted(SCHEMAS)}")
    schema = SCHEMAS[task]
    resolved = dict(DEFAULTS[task])
    resolved["task"] = task
    for key, value in doc.items():
        if key == "task":
            continue
        if key not in schema:
            raise ConfigError(f"$.{key}: unknown key for task {task!r}")
        expected = schema[key]
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected) or isinstance(value, bool):
            raise ConfigError(
                f"$.{key}: expected {expected.__name__}, got {type(value).__name__}"
            )
        resolved[key] = value
    if resolved.get("cell") not in CELL_KINDS:
        raise ConfigError(f"$.cell: unknown cell kind {resolved.get('cell')!r}")
    for key in ("hidden", "seed", "lr"):
        if key in resolved and isinstance(resolved[key], (int, float)) and resolved[key] < 0:
            raise ConfigError(f"$.{key}: must be non-negative")
    return resolved


def load_config_file(path: str, task: str | None = None) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"$: {path} is not valid JSON ({e})") from None
    return validate_config(doc, task)


def apply_overrides(resolved: dict, overrides: dict) -> dict:
    """Re-validate after CLI flag overrides (flags beat file values)."""
    merged = dict(resolved)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(merged)
