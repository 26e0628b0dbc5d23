"""Experiment configuration: JSON file validated against a bundled schema, then overridden by flags."""

from __future__ import annotations

import json
from importlib import resources

import jsonschema

from .errors import ConfigError

DEFAULTS = {
    "geometry": "torus:3",
    "beta": 1.0,
    "L_list": [8, 12, 16, 24, 32, 48],
    "rho": "critical",
    "mu_mode": "none",
    "method": "direct",
    "seed": 0,
    "out": ".",
}


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    return cfg


def load(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the config file, then non-None overrides; the merged result is validated."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(from_file, dict):
            raise ConfigError("config file must hold a JSON object")
        validate(from_file)
        cfg.update(from_file)
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return validate(cfg)
