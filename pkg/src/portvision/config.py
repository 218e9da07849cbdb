"""Key-value text files: the one config syntax used across the toolkit.

Intrinsics files, dataset manifests, run manifests and CLI configs all share
the same trivial format: one ``key = value`` pair per line, ``#`` starts a
comment, blank lines ignored.  Values stay strings here; typed accessors
raise ConfigError naming the offending key so CLI exit paths can stay honest.
"""

from __future__ import annotations

import os
from typing import Mapping


class ConfigError(ValueError):
    """Malformed config text, unknown key, or unparseable value."""


def parse_kv_text(text: str) -> dict:
    """Parse ``key = value`` lines into an insertion-ordered dict."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        out[key] = value.strip()
    return out


def read_kv_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_kv_text(text)


def write_kv_file(path, mapping: Mapping) -> None:
    lines = [f"{k} = {v}" for k, v in mapping.items()]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def require_keys(mapping: Mapping, known, where: str = "config") -> None:
    """Reject unknown keys so typos fail loudly instead of silently defaulting."""
    known = set(known)
    for key in mapping:
        if key not in known:
            raise ConfigError(f"{where}: unknown key '{key}'")


def get_float(mapping: Mapping, key: str, default=None) -> float:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return float(default)
    try:
        return float(mapping[key])
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}': expected a number, got {mapping[key]!r}")


def get_int(mapping: Mapping, key: str, default=None) -> int:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return int(default)
    try:
        return int(str(mapping[key]), 10)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}': expected an integer, got {mapping[key]!r}")


def get_bool(mapping: Mapping, key: str, default=None) -> bool:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return bool(default)
    val = str(mapping[key]).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key '{key}': expected a boolean, got {mapping[key]!r}")


def get_str(mapping: Mapping, key: str, default=None) -> str:
    if key not in mapping:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return str(default)
    return str(mapping[key])
