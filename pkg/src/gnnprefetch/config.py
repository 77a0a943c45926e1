"""Pipeline configuration: one INI document, sections per stage.

Values are layered: built-in defaults, then the ``--config`` file, then
command-line flags. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from pathlib import Path

DEFAULTS: dict[str, dict[str, object]] = {
    "global": {"seed": 0, "out": "run", "source": "synth"},
    "synth": {"branching": 4, "depth": 4, "files_per_dir": 2, "cross_links": 5},
    "scan": {"root": ""},
    "crawl": {"base_url": "", "max_pages": 1000, "max_depth": 10, "delay_ms": 200.0},
    "walks": {"walkers": 1000, "length": 20, "p": 1.0, "q": 0.5, "window": 1,
              "start_policy": "uniform", "heldout_walkers": 150},
    "train": {"layer": "sage", "epochs": 100, "lr": 0.005, "weight_decay": 1e-4,
              "temperature": 0.1, "hidden": 128, "embed_dim": 64, "batch_size": 1024,
              "topk": 5},
    "simulate": {"top_k": 5, "cache_policy": "unbounded", "capacity": 0,
                 "baseline": "all"},
}

SOURCES = ("synth", "scan", "crawl")


class ConfigError(ValueError):
    pass


def _coerce(section: str, key: str, raw: str):
    default = DEFAULTS[section][key]
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
    return raw.strip()


def load_config(path: str | os.PathLike | None) -> dict[str, dict[str, object]]:
    cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            cfg[section][key] = _coerce(section, key, raw)
    if cfg["global"]["source"] not in SOURCES:
        raise ConfigError(f"{path}: [global] source must be one of {SOURCES}")
    return cfg


def stage_seed(seed: int, stage: str) -> int:
    """Independent 32-bit seed for one pipeline stage, derived from the global seed."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def ensure_dir(path: str | os.PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
