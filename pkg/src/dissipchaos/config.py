"""TOML configuration files parsed into typed parameter records.

A configuration holds a ``[model]`` table whose ``type`` selects the record
(``kerr``, ``bose-hubbard``, ``spin-chain``, ``random``) and optional
per-task tables (``[ssqt]``, ``[classical]``, ``[twa]``, ``[otoc]``,
``[hstats]``, ``[stats]``). Command-line values override file values.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any

import tomli

from .models import (
    BoseHubbardParams,
    ModelSpec,
    RandomLiouvillianParams,
    SpinChainParams,
    build_bose_hubbard,
    build_random_liouvillian,
    build_spin_chain,
)


class ConfigError(ValueError):
    pass


MODEL_RECORDS = {
    "kerr": BoseHubbardParams,
    "bose-hubbard": BoseHubbardParams,
    "spin-chain": SpinChainParams,
    "random": RandomLiouvillianParams,
}

# physics defaults applied before the file, so a bare ``type = "kerr"`` is usable
MODEL_DEFAULTS = {
    "kerr": {"delta": 10.0, "F": 3.5, "U": 10.0, "gamma": 1.0, "J": 0.0, "n_sites": 1, "cutoff": 20},
    "bose-hubbard": {"delta": 2.5, "F": 3.0, "n_sites": 2, "cutoff": 7},
    "spin-chain": {"L": 5},
    "random": {"N": 20},
}


def load_config(path: str | Path | None) -> dict:
    """Parse a TOML file, or the ``metadata.config`` block of a previous JSON output."""
    if path is None:
        return {}
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return data.get("metadata", {}).get("config", data)
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _coerce(field: dataclasses.Field, value: Any) -> Any:
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {field.name!r} expects {kind}, got {value!r}") from exc
    return value


def record_from_dict(cls, values: dict):
    """Instantiate a frozen parameter dataclass, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} parameters: {sorted(unknown)}")
    kwargs = {k: _coerce(fields[k], v) for k, v in values.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def model_section(cfg: dict, model_type: str | None = None, overrides: dict | None = None) -> tuple[str, dict]:
    """Resolve the model type and the merged parameter dict (defaults < file < overrides)."""
    sect = dict(cfg.get("model", {}))
    mtype = model_type or sect.pop("type", None)
    sect.pop("type", None)
    if mtype is None:
        raise ConfigError("no model type given (use --model or [model] type = ...)")
    if mtype not in MODEL_RECORDS:
        raise ConfigError(f"unknown model type {mtype!r}; choose from {sorted(MODEL_RECORDS)}")
    merged = dict(MODEL_DEFAULTS[mtype])
    merged.update(sect)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return mtype, merged


def build_model(mtype: str, values: dict) -> tuple[ModelSpec, Any]:
    rec = record_from_dict(MODEL_RECORDS[mtype], values)
    if mtype in ("kerr", "bose-hubbard"):
        return build_bose_hubbard(rec), rec
    if mtype == "spin-chain":
        return build_spin_chain(rec), rec
    return build_random_liouvillian(rec), rec


def model_from_config(cfg: dict, model_type: str | None = None, overrides: dict | None = None):
    """``(ModelSpec, record, resolved_dict)`` from a parsed config plus overrides."""
    mtype, values = model_section(cfg, model_type, overrides)
    model, rec = build_model(mtype, values)
    resolved = {"type": mtype, **dataclasses.asdict(rec)}
    return model, rec, resolved


def task_options(cfg: dict, section: str, cli: dict, defaults: dict) -> dict:
    """Merge ``defaults < [section] < cli`` (``None`` command-line values do not override)."""
    out = dict(defaults)
    file_vals = cfg.get(section, {})
    unknown = set(file_vals) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    out.update(file_vals)
    out.update({k: v for k, v in cli.items() if v is not None and k in defaults})
    return out
