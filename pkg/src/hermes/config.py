"""Dataclass <-> JSON-dict plumbing shared by every configurable record.

Unknown keys are rejected and every message names the dotted key at fault.
"""
import dataclasses
import json
import typing

from .errors import ConfigError


def _is_dataclass_type(tp):
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def from_dict(cls, data, prefix=""):
    """Build dataclass ``cls`` from ``data``, recursing into nested dataclasses."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or '<root>'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    errors = [f"{prefix}{key}: unknown key" for key in data if key not in fields]
    kwargs = {}
    for name, value in data.items():
        if name not in fields:
            continue
        tp = hints.get(name)
        if _is_dataclass_type(tp):
            try:
                kwargs[name] = from_dict(tp, value, prefix=f"{prefix}{name}.")
            except ConfigError as exc:
                errors.extend(exc.messages)
        elif isinstance(value, list) and (tp is tuple or typing.get_origin(tp) is tuple):
            kwargs[name] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[name] = value
    if errors:
        raise ConfigError(errors)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError([f"{prefix}{m}" for m in exc.messages]) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or '<root>'}: {exc}") from None


def to_dict(obj):
    return json.loads(json.dumps(dataclasses.asdict(obj)))


def apply_overrides(doc, overrides):
    """Apply ``key.sub=value`` overrides to a nested dict (values parsed as JSON)."""
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"{item}: override must look like key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{item}: empty override key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for i, part in enumerate(parts[:-1]):
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"{'.'.join(parts[:i + 1])}: not an object, cannot set {key}")
            node = nxt
        node[parts[-1]] = value
    return doc


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
