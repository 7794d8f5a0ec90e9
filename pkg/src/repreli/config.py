"""Run configuration: built-in defaults, flat ``key=value`` files, flag overrides."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace

from .errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    metric: str = "cosine"
    normalize: bool = False
    k: int = 100
    dist_k: int = 1
    eps: float | None = None
    sim: str = "jaccard"
    normalized_nc: bool = False
    n_ref: int = 5000
    M: int = 10
    c_mix: int = 10
    mixture: str = "auto"
    seed: int = 0
    em_max_iter: int = 200
    em_tol: float = 1e-6
    head_step: float = 0.1
    head_l2: float = 1e-3
    head_epochs: int = 500
    reli_metric: str = "brier"
    multiclass: bool = False


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, typ, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if typ in ("bool", bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if typ in ("int", int):
            return int(text)
        if typ in ("float", float):
            return float(text)
        if typ == "float | None":
            return None if text.lower() in ("", "none") else float(text)
    except ValueError:
        raise ParameterError(f"config key {name!r}: cannot parse {text!r} as {typ}") from None
    return text


def parse_kv(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def load_kv_file(path) -> dict:
    with open(path) as f:
        return parse_kv(f.read(), str(path))


def apply_overrides(obj, values: dict, source: str):
    """Return a copy of dataclass ``obj`` with ``values`` applied (unknown keys rejected)."""
    if not values:
        return obj
    types = {f.name: f.type for f in fields(obj)}
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ParameterError(f"{source}: unknown keys {unknown}")
    coerced = {k: _coerce(k, types[k], v) for k, v in values.items()}
    logger.info("config: %s sets %s", source, ", ".join(f"{k}={coerced[k]!r}" for k in sorted(coerced)))
    return replace(obj, **coerced)


def resolve(defaults, config_file=None, flags: dict | None = None):
    """defaults < config file < flags."""
    cfg = defaults
    if config_file:
        cfg = apply_overrides(cfg, load_kv_file(config_file), f"file {config_file}")
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    return apply_overrides(cfg, flags, "flags")


def dump_kv(obj) -> str:
    return "".join(f"{f.name}={getattr(obj, f.name)}\n" for f in fields(obj))
