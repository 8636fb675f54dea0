"""Flat ``key = value`` configuration with dotted section prefixes.

Lines starting with ``#`` are comments. Values stay strings until a schema
converts them; unknown keys are rejected so typos never pass silently.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Callable

from .chem.tables import data_path
from .pretrain import PretrainConfig
from .rl.config import AlgoConfig


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"{source}:{lineno}", f"malformed key {key!r}")
        if key in out:
            raise ConfigError(key, f"set twice ({source}:{lineno})")
        out[key] = value
    return out


def load_config(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))


def dump_config(values: dict) -> str:
    return "".join(f"{k} = {_text(values[k])}\n" for k in sorted(values))


def _text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(_text(x) for x in v)
    return str(v)


# ---------------------------------------------------------------- values

def to_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def to_int_list(text: str) -> list[int]:
    return [int(t) for t in split_list(text)]


def split_list(text, sep: str = ",") -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(sep) if t.strip()]


def resolve_data_file(value: str) -> Path | None:
    """An existing path, or a file of that name in the data directory."""
    p = Path(value).expanduser()
    if p.is_file():
        return p
    if not p.parent.parts or str(p.parent) == ".":
        q = data_path(value)
        if q.is_file():
            return q
    return None


def convert(values: dict[str, str], key: str, fn: Callable, default=None):
    if key not in values:
        return default
    try:
        return fn(values[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(key, f"invalid value {values[key]!r} ({exc})") from None


_CASTS = {int: int, float: float, bool: to_bool, str: str}


def dataclass_from(values: dict[str, str], prefix: str, cls, base=None):
    """Fill a dataclass from ``prefix.field`` keys, on top of ``base`` if given."""
    obj = base if base is not None else cls()
    changes = {}
    types = {f.name: type(getattr(obj, f.name)) for f in dataclasses.fields(cls)}
    for name, typ in types.items():
        key = f"{prefix}.{name}"
        if key in values:
            changes[name] = convert(values, key, _CASTS.get(typ, str))
    return dataclasses.replace(obj, **changes)


def known_keys(prefix: str, cls) -> set[str]:
    return {f"{prefix}.{f.name}" for f in dataclasses.fields(cls)}


MODEL_KEYS = {"model.embedding_dim", "model.hidden_dim", "model.num_layers"}
PRETRAIN_KEYS = known_keys("pretrain", PretrainConfig) - {"pretrain.out_dir", "pretrain.seed",
                                                          "pretrain.embedding_dim", "pretrain.hidden_dim",
                                                          "pretrain.num_layers"}
ALGO_KEYS = known_keys("algo", AlgoConfig) | {"algo.name"}
RUN_KEYS = {"run.seeds", "run.out", "run.report_every", "run.k", "run.quiet", "run.sediv_sample"}
PROMPT_KEYS = {"prompt.mode", "prompt.prefix", "prompt.scaffold", "prompt.prompts"}
FILTER_KEYS = {"filters.reference", "filters.max_logp", "filters.max_rotatable", "filters.min_weight",
               "filters.max_weight", "filters.allowed_elements", "filters.alerts"}
GENERATE_KEYS = {"generate.checkpoint", "generate.count", "generate.max_len", "generate.report_validity"}
DIVERSITY_FIELDS = ("enabled", "threshold", "occupancy", "min_score")
TASK_PARAMS = {"kind", "target", "width", "radius", "pattern", "components", "weights", "mean", "command",
               "timeout"} | {f"diversity.{f}" for f in DIVERSITY_FIELDS}


def is_task_key(key: str, single: bool) -> bool:
    """``task.<param>`` for a single task, ``task.<name>.<param>`` inside a suite."""
    parts = key.split(".")
    if parts[0] != "task" or len(parts) < 2:
        return False
    if single and ".".join(parts[1:]) in TASK_PARAMS | {"name"}:
        return True
    return len(parts) >= 3 and ".".join(parts[2:]) in TASK_PARAMS


def check_keys(values: dict[str, str], allowed: set[str], task_keys: str | None = None) -> None:
    """Reject keys outside ``allowed``; ``task_keys`` is 'single' or 'suite' to admit task settings."""
    for key in sorted(values):
        if key in allowed:
            continue
        if task_keys and is_task_key(key, task_keys == "single"):
            continue
        raise ConfigError(key, "unknown configuration key")
