"""Flat key-value config files.

One ``key = value`` pair per line, ``#`` starts a comment.  Values keep their
string form; consumers cast.  Used for EngineConfig and SyntheticSpec; the
recognized keys are documented in the README.
"""

from __future__ import annotations

from dataclasses import fields

from .states import EngineConfig
from .synthetic import SyntheticSpec


class ConfigError(ValueError):
    pass


def read_kv(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_engine_config(path: str) -> EngineConfig:
    return EngineConfig.from_mapping(read_kv(path))


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def load_synthetic_spec(path: str) -> SyntheticSpec:
    kv = read_kv(path)
    kwargs = {}
    valid = {f.name: f for f in fields(SyntheticSpec)}
    for key, raw in kv.items():
        if key not in valid:
            raise ConfigError(f"{path}: unknown synthetic spec key {key!r}")
        default = valid[key].default
        if isinstance(default, bool):
            try:
                kwargs[key] = _BOOL[raw.lower()]
            except KeyError:
                raise ConfigError(f"{path}: bad boolean {raw!r} for {key}") from None
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        elif isinstance(default, float):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return SyntheticSpec(**kwargs)
