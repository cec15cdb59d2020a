"""Flat key/value config files (TOML syntax, no tables required)."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_flat(path: str | Path) -> dict[str, Any]:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return flatten(data)


def flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Collapse ``[section] key = v`` into ``section.key``."""
    out: dict[str, Any] = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def section(flat: dict[str, Any], name: str) -> dict[str, Any]:
    pre = name + "."
    return {k[len(pre):]: v for k, v in flat.items() if k.startswith(pre)}
