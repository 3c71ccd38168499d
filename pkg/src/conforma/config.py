"""Flat ``key = value`` experiment configuration files."""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

from .experiment import ExperimentConfig

#: keys accepted besides the ExperimentConfig fields
EXTRA_KEYS = {"output_dir": "results", "format": "csv"}
ALIASES = {"lambda": "lam"}
REQUIRED = ("seed",)
_LIST_KEYS = {"alpha_grid", "ncm", "residual_kind", "theta_grid"}


class ConfigError(ValueError):
    pass


def _field_types():
    return {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _LIST_KEYS:
        items = [v.strip() for v in raw.split(",") if v.strip()]
        if key in ("alpha_grid", "theta_grid"):
            return tuple(float(v) for v in items)
        return tuple(items)
    if key in ("dimension", "n_train", "n_pool", "replications", "seed", "test_grid_size"):
        return int(raw)
    if key in ("gamma", "theta_gen", "lam"):
        return float(raw)
    if key == "theta_fit":
        return "mle" if raw.lower() == "mle" else float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>", notify=None):
    """Parse config text into ``(ExperimentConfig, extras)``.

    Unknown or duplicate keys and malformed lines raise :class:`ConfigError`
    naming the line. Missing optional keys fall back to defaults, each
    reported through ``notify``.
    """
    notify = notify or (lambda msg: print(msg, file=sys.stderr))
    fields = _field_types()
    values, extras, seen = {}, {}, set()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        key = ALIASES.get(key, key)
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if key in EXTRA_KEYS:
            extras[key] = raw
            continue
        if key not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"{source}: required key {key!r} missing")
    for name, f in fields.items():
        if name not in values:
            notify(f"notice: {name} not set, using default {_show(f.default)}")
    for key, default in EXTRA_KEYS.items():
        if key not in extras:
            notify(f"notice: {key} not set, using default {default!r}")
            extras[key] = default
    if extras["format"] not in ("csv", "json"):
        raise ConfigError(f"{source}: format must be csv or json")
    try:
        cfg = ExperimentConfig(**values)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from None
    return cfg, extras


def load_config(path, notify=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, str(path), notify)


def format_config(cfg: ExperimentConfig, extras=None) -> str:
    """Resolved configuration in the same ``key = value`` syntax."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        key = "lambda" if f.name == "lam" else f.name
        if isinstance(v, tuple):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    for k, v in (extras or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def _show(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(map(str, v)) if len(v) <= 6 else f"{len(v)} values from {v[0]:g} to {v[-1]:g}"
    return "auto" if v is None else str(v)
