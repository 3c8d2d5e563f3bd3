"""key = value configuration files.

Lines are ``key = value``; '#' starts a comment; blank lines ignored.  Values
stay strings here, consumers coerce via the typed getters so error messages
can name the offending key.
"""

from __future__ import annotations

from .acquisition import FormatError


def load_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key = key.strip()
            if not key:
                raise FormatError(f"{path}:{lineno}: empty key")
            if key in out:
                raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def get_float(cfg: dict, key: str, default: float | None = None) -> float:
    if key not in cfg:
        if default is None:
            raise KeyError(f"missing config key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError as err:
        raise ValueError(f"config key {key!r}: {err}") from err


def get_int(cfg: dict, key: str, default: int | None = None) -> int:
    if key not in cfg:
        if default is None:
            raise KeyError(f"missing config key {key!r}")
        return default
    try:
        return int(cfg[key])
    except ValueError as err:
        raise ValueError(f"config key {key!r}: {err}") from err


def get_str(cfg: dict, key: str, default: str | None = None) -> str:
    if key not in cfg:
        if default is None:
            raise KeyError(f"missing config key {key!r}")
        return default
    return cfg[key]


def get_bool(cfg: dict, key: str, default: bool | None = None) -> bool:
    if key not in cfg:
        if default is None:
            raise KeyError(f"missing config key {key!r}")
        return default
    v = cfg[key].lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"config key {key!r}: not a boolean: {cfg[key]!r}")
