"""Run configuration files and reproducibility manifests.

A run config is one JSON object.  Relative paths inside it are resolved
against the directory holding the file::

    {
      "data": {"train": "train.txt", "valid": "valid.txt", "test": "test.txt",
               "descriptions": "descriptions.tsv"},
      "ontology": "ontology.nt",
      "negatives": {"ratio": 1, "strategy": "both", "valid_seed": 11, "test_seed": 12},
      "kge": {"dim": 200, "epochs": 1000, "scorer": "rotate", "seed": 0},
      "fusion": {"lr": 0.1, "epochs": 100, "seed": 0},
      "endpoint": {"base_url": "http://localhost:8000/v1", "model": "m"},
      "templates": "templates.tsv",
      "instruction": "Please help determine whether the triple (h,r,t) is a valid triple."
    }
"""
from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ConfigError

_SECTIONS = {"data", "ontology", "negatives", "kge", "fusion", "endpoint", "templates", "instruction",
             "labeled"}
_NEG_DEFAULTS = {"ratio": 1, "strategy": "both", "valid_seed": 11, "test_seed": 12, "train_seed": 10}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RunConfig:
    raw: dict
    base: Path
    path: Path | None = None
    inputs: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = set(raw) - _SECTIONS
        if unknown:
            raise ConfigError(f"{path}: unknown sections {', '.join(sorted(unknown))}")
        return cls(raw, path.parent, path)

    @property
    def hash(self) -> str:
        return canonical_hash(self.raw)

    def resolve(self, rel) -> Path | None:
        if rel is None:
            return None
        p = Path(rel)
        return p if p.is_absolute() else self.base / p

    def data_path(self, key) -> Path | None:
        return self.resolve(self.raw.get("data", {}).get(key))

    def require_data(self, key) -> Path:
        p = self.data_path(key)
        if p is None:
            raise ConfigError(f"config has no data.{key} path")
        return p

    def section(self, name) -> dict:
        return dict(self.raw.get(name) or {})

    @property
    def negatives(self) -> dict:
        return {**_NEG_DEFAULTS, **self.section("negatives")}

    @property
    def ontology_path(self) -> Path | None:
        return self.resolve(self.raw.get("ontology"))

    @property
    def templates_path(self) -> Path | None:
        return self.resolve(self.raw.get("templates"))

    def labeled_path(self, split) -> Path | None:
        """Optional pre-built labelled sets: ``"labeled": {"valid": "...", "test": "..."}``."""
        return self.resolve(self.section("labeled").get(split))


class Manifest:
    """Record of one CLI run: command, config hash, seeds, input and output digests."""

    def __init__(self, command, argv, config: RunConfig | None = None):
        self.data = {
            "command": command,
            "argv": list(argv),
            "version": __version__,
            "python": sys.version.split()[0],
            "platform": platform.platform(),
            "config": str(config.path) if config and config.path else None,
            "config_hash": config.hash if config else None,
            "seeds": {},
            "inputs": {},
            "outputs": {},
        }

    def seed(self, name, value):
        self.data["seeds"][name] = value

    def input(self, path):
        if path is not None and Path(path).is_file():
            self.data["inputs"][str(path)] = sha256_file(path)

    def output(self, path):
        if path is not None and Path(path).is_file():
            self.data["outputs"][str(path)] = sha256_file(path)

    def write(self, path):
        Path(path).write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
