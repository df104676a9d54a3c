"""Flat ``key = value`` run configuration files.

Lines are ``key = value``; blank lines and lines starting with ``#`` are
ignored. Every command declares the keys it accepts together with a
parser for each value, and unknown keys are an error.
"""

import hashlib

from . import _jsonio
from .exceptions import GKnockoffError


class ConfigError(GKnockoffError, ValueError):
    """Malformed configuration or input data."""


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _str(v):
    return v


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt(parse):
    def inner(v):
        return None if v.lower() in ("", "none", "null") else parse(v)
    return inner


def _list(parse):
    def inner(v):
        return [parse(x.strip()) for x in v.split(",") if x.strip()]
    return inner


def _number(v):
    f = float(v)
    return int(f) if f.is_integer() and "." not in v and "e" not in v.lower() else f


SIMULATE_KEYS = {
    "name": (_str, "study"),
    "scenario": (_str, "piecewise"),
    "n": (_int, 350),
    "p": (_int, 100),
    "K": (_int, 5),
    "J": (_int, 10),
    "A": (_float, 0.1),
    "rho": (_float, 0.0),
    "cov_kind": (_str, "ar"),
    "zeta": (_float, 100.0),
    "sigma": (_float, 1.0),
    "change_locations": (_opt(_list(_int)), None),
    "reps": (_int, 200),
    "seed": (_int, None),
    "q": (_float, 0.2),
    "methods": (_list(_str), ["gknockoff"]),
    "stat": (_str, "lcd"),
    "lcd_fraction": (_float, 0.1),
    "sweep": (_opt(_str), None),
    "values": (_opt(_list(_number)), None),
    "bandwidth": (_opt(_int), None),
    "bandwidths": (_opt(_list(_int)), None),
    "keep_top": (_opt(_int), None),
}

DETECT_KEYS = {
    "response": (_str, None),
    "group": (_opt(_str), None),
    "group_order": (_opt(_list(_str)), None),
    "exposure": (_list(_str), None),
    "unpenalized": (_opt(_list(_str)), None),
    "q": (_float, 0.2),
    "method": (_str, "auto"),
    "stat": (_str, "lcd"),
    "seed": (_int, None),
    "split_fraction": (_float, 0.5),
    "sigma": (_opt(_float), None),
    "lcd_fraction": (_float, 0.1),
    "offset": (_int, 1),
}

SCREEN_KEYS = {
    "response": (_str, None),
    "exposure": (_list(_str), None),
    "keep_top": (_opt(_int), None),
    "threshold": (_opt(_float), None),
    "bandwidths": (_opt(_list(_int)), None),
    "r2_breaks": (_opt(_int), None),
    "seed": (_int, None),
}

SCHEMAS = {"simulate": SIMULATE_KEYS, "detect": DETECT_KEYS, "screen": SCREEN_KEYS}
REQUIRED = {
    "simulate": ("seed",),
    "detect": ("seed", "response", "exposure"),
    "screen": ("seed", "response", "exposure"),
}


def parse_text(text, source="<config>"):
    """Raw ``{key: value-string}`` pairs; duplicate keys are an error."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {s!r}")
        key, value = (part.strip() for part in s.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def resolve(raw, command, overrides=None):
    """Typed config for ``command`` with defaults filled in.

    Raises
    ------
    ConfigError
        On unknown keys, unparsable values or missing required keys.
    """
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    out = {}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                out[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})") from None
        else:
            out[key] = default
    for key, value in (overrides or {}).items():
        if value is not None:
            out[key] = value
    missing = [k for k in REQUIRED[command] if out.get(k) is None]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    return out


def load(path, command, overrides=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return resolve(parse_text(text, str(path)), command, overrides)


def config_hash(resolved):
    """SHA-256 of the canonical JSON form of a resolved config."""
    return hashlib.sha256(_jsonio.dumps(resolved, indent=0).encode()).hexdigest()


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def to_text(resolved):
    """Config file text that resolves back to ``resolved``."""
    return "".join(f"{k} = {_format(v)}\n" for k, v in sorted(resolved.items()))
