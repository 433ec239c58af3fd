"""Run configuration files (JSON, schema version 1).

Example::

    {
      "schema_version": 1,
      "target_model": "target.json",
      "drafter_model": "drafter.json",
      "engine": {"K": 15, "W": 6, "theta": 0.3, "mode": "fly", "mla": false,
                 "max_new_tokens": 128},
      "lookup": {"max_ngram": 3, "min_ngram": 1, "span": 10},
      "cost_profile": "llama70b",
      "prompts": ["first prompt", "second prompt"],
      "seed": 0,
      "output_dir": "out"
    }

``prompts`` may instead be a path to a UTF-8 file with one prompt per
non-empty line. Relative paths resolve against the config file's directory.
Unknown keys are errors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from .core import ConfigError
from .drafting import LookupConfig
from .engine import EngineConfig, Mode
from .tokenizer import read_text

SCHEMA_VERSION = 1

TOP_KEYS = {"schema_version", "target_model", "drafter_model", "engine", "lookup",
            "cost_profile", "prompts", "seed", "output_dir"}
ENGINE_KEYS = {"K": "k", "W": "window", "theta": "theta", "mode": "mode", "mla": "mla",
               "max_new_tokens": "max_new_tokens", "eos": "eos", "temperature": "temperature"}
LOOKUP_KEYS = {"max_ngram", "min_ngram", "span"}

MODE_ALIASES = {
    "fly": Mode.FLY,
    "standard": Mode.STANDARD,
    "standardspd": Mode.STANDARD,
    "target_only": Mode.TARGET_ONLY,
    "targetonly": Mode.TARGET_ONLY,
}


def parse_mode(text: str) -> Mode:
    mode = MODE_ALIASES.get(text.lower().replace("-", "_"))
    if mode is None:
        raise ConfigError(f"unknown mode {text!r} (expected fly, standard or target_only)")
    return mode


@dataclass
class RunConfig:
    target_model: Path
    drafter_model: Path
    engine: EngineConfig = field(default_factory=EngineConfig)
    cost_profile: str = "llama70b"
    prompts: List[str] = field(default_factory=list)
    seed: int = 0
    output_dir: Path = Path("out")
    source: Optional[Path] = None


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _where(path: Path, text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"{path}:{line}" if line else str(path)


def _check_keys(path: Path, text: str, section: dict, allowed, label: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{_where(path, text, key)}: unknown key {key!r} in {label}")


def _expect(path: Path, text: str, key: str, value, kinds: Tuple[type, ...], what: str):
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{_where(path, text, key)}: {key} must be {what}")
    if not isinstance(value, kinds):
        raise ConfigError(f"{_where(path, text, key)}: {key} must be {what}")
    return value


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(path, text, data, TOP_KEYS, "config")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{_where(path, text, 'schema_version')}: schema_version must be "
                          f"{SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    base = path.parent

    models = {}
    for key in ("target_model", "drafter_model"):
        if key not in data:
            raise ConfigError(f"{path}: missing required key {key!r}")
        p = base / _expect(path, text, key, data[key], (str,), "a file path")
        if not p.is_file():
            raise ConfigError(f"{_where(path, text, key)}: model file {p} does not exist")
        models[key] = p

    engine_raw = _expect(path, text, "engine", data.get("engine", {}), (dict,), "an object")
    _check_keys(path, text, engine_raw, ENGINE_KEYS, "engine")
    lookup_raw = _expect(path, text, "lookup", data.get("lookup", {}), (dict,), "an object")
    _check_keys(path, text, lookup_raw, LOOKUP_KEYS, "lookup")
    seed = _expect(path, text, "seed", data.get("seed", 0), (int,), "an integer")

    kwargs = {}
    for key, attr in ENGINE_KEYS.items():
        if key not in engine_raw:
            continue
        value = engine_raw[key]
        if key == "mode":
            value = parse_mode(_expect(path, text, key, value, (str,), "a string"))
        elif key == "mla":
            value = _expect(path, text, key, value, (bool,), "true or false")
        elif key == "theta":
            value = float(_expect(path, text, key, value, (int, float), "a number"))
        elif key == "temperature":
            if value is not None:
                value = float(_expect(path, text, key, value, (int, float), "a number or null"))
        elif key == "eos":
            if value is not None:
                value = _expect(path, text, key, value, (int,), "a token id or null")
        else:
            value = _expect(path, text, key, value, (int,), "an integer")
        kwargs[attr] = value
    try:
        lookup = LookupConfig(**{k: _expect(path, text, k, v, (int,), "an integer")
                                 for k, v in lookup_raw.items()})
        engine = EngineConfig(lookup=lookup, seed=seed, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    prompts_raw = data.get("prompts")
    if isinstance(prompts_raw, str):
        ppath = base / prompts_raw
        if not ppath.is_file():
            raise ConfigError(f"{_where(path, text, 'prompts')}: prompt file {ppath} does not exist")
        prompts = [line for line in read_text(ppath).splitlines() if line.strip()]
    elif isinstance(prompts_raw, list) and all(isinstance(p, str) for p in prompts_raw):
        prompts = list(prompts_raw)
    else:
        raise ConfigError(f"{_where(path, text, 'prompts')}: prompts must be a list of strings "
                          "or a file path")
    if not prompts or any(p == "" for p in prompts):
        raise ConfigError(f"{_where(path, text, 'prompts')}: prompts must be non-empty strings")

    cost = _expect(path, text, "cost_profile", data.get("cost_profile", "llama70b"), (str,),
                   "a profile name or path")
    if cost.endswith(".json"):
        cost_path = base / cost
        if not cost_path.is_file():
            raise ConfigError(f"{_where(path, text, 'cost_profile')}: cost profile {cost_path} "
                              "does not exist")
        cost = str(cost_path)
    out = base / _expect(path, text, "output_dir", data.get("output_dir", "out"), (str,), "a path")
    return RunConfig(models["target_model"], models["drafter_model"], engine, cost, prompts,
                     seed, out, path)
