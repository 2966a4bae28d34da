"""Config files (TOML) and seed resolution shared by the command line tools."""
from __future__ import annotations

import json
import os
import sys
from typing import Any, Dict, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "BOTRACLE_SEED"
SECTIONS = ("simulate", "ingest", "labeling", "sgan", "dgcnn", "detect")


def load_config(path: Optional[str]) -> Dict[str, Any]:
    """Parse a TOML config file; ``None`` gives an empty config."""
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def section(doc: Mapping[str, Any], name: str) -> Dict[str, Any]:
    """The ``[name]`` table of a combined file, or the whole single-purpose file.

    A file counts as combined when any top-level key is a known stage table,
    so ``sgan.toml`` may skip the header while ``run.toml`` keeps one table
    per stage.
    """
    if any(isinstance(doc.get(s), Mapping) for s in SECTIONS):
        return dict(doc.get(name, {}))
    return dict(doc)


def resolve_seed(flag: Optional[int], file_value: Optional[int] = None) -> int:
    """Seed precedence: command-line flag, config file, environment, 0."""
    if flag is not None:
        return int(flag)
    if file_value is not None:
        return int(file_value)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        # JSON escapes are valid in TOML basic strings, except that TOML has no
        # surrogate pairs and wants DEL escaped.
        return json.dumps(v, ensure_ascii=False).replace("\x7f", "\\u007f")
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} as TOML")


def dump_table(name: str, values: Mapping[str, Any]) -> str:
    """One flat ``[name]`` TOML table; enough for the generated config files."""
    lines = [f"[{name}]"]
    lines.extend(f"{k} = {_toml_value(v)}" for k, v in values.items())
    return "\n".join(lines) + "\n"
