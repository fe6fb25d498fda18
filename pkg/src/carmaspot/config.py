"""JSON configuration files for calibration runs.

Recognised keys: mode, u_star_min, u_star_max, v, M_f, h, seed, rng_streams
(``rng-streams`` is accepted as an alias).  Every key is optional; missing
values take the per-mode defaults of :class:`CalibrationConfig`.
"""

from __future__ import annotations

import json
from pathlib import Path

from .calibration import CalibrationConfig
from .errors import DataError, DomainError

__all__ = ["CONFIG_KEYS", "load_config", "config_from_dict", "save_config"]

CONFIG_KEYS = ("mode", "u_star_min", "u_star_max", "v", "M_f", "h", "seed", "rng_streams")
_ALIASES = {"rng-streams": "rng_streams"}
_TYPES = {"mode": str, "u_star_min": int, "u_star_max": int, "v": float, "M_f": int,
          "h": float, "seed": int, "rng_streams": int}


def config_from_dict(raw: dict, **overrides) -> CalibrationConfig:
    """Validate a mapping of config keys and build a :class:`CalibrationConfig`.

    Keyword ``overrides`` that are not None take precedence over ``raw``.
    """
    if not isinstance(raw, dict):
        raise DataError("configuration must be a JSON object")
    values = {}
    for key, val in raw.items():
        key = _ALIASES.get(key, key)
        if key not in _TYPES:
            raise DataError(f"unknown configuration key {key!r}; expected one of {', '.join(CONFIG_KEYS)}")
        if val is None:
            continue
        want = _TYPES[key]
        if want is int and not (isinstance(val, int) and not isinstance(val, bool)):
            raise DataError(f"configuration key {key!r} must be an integer, got {val!r}")
        if want is float and not (isinstance(val, (int, float)) and not isinstance(val, bool)):
            raise DataError(f"configuration key {key!r} must be a number, got {val!r}")
        if want is str and not isinstance(val, str):
            raise DataError(f"configuration key {key!r} must be a string, got {val!r}")
        values[key] = want(val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return CalibrationConfig(**values)
    except DomainError as exc:
        raise DataError(f"invalid configuration: {exc}") from exc


def load_config(path=None, **overrides) -> CalibrationConfig:
    """Read a JSON config file (or only the overrides when ``path`` is None)."""
    raw = {}
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    return config_from_dict(raw, **overrides)


def save_config(config: CalibrationConfig, path) -> None:
    data = {k: getattr(config, k) for k in CONFIG_KEYS}
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
