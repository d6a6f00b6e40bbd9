"""Engine configuration: strict loading of a declarative YAML/JSON document.

Sections ``memory``, ``scheduler``, ``sampler``, ``buffer``, and ``engine``
map one-to-one onto the parameter dataclasses; every key must be known and
every value in range.  An empty document yields the full default
configuration.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError, ValidationError
from .memory import MemoryParams, PhiConfig
from .sampler import SamplerParams
from .scheduler import SchedulerParams


@dataclass
class BufferParams:
    capacity: int = 1024
    refresh_interval: int = 50
    staleness_cap_epochs: int = 10

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError("buffer capacity must be >= 1")
        if self.refresh_interval < 1:
            raise ValidationError("refresh interval must be >= 1")
        if self.staleness_cap_epochs < 1:
            raise ValidationError("staleness cap must be >= 1")


@dataclass
class EngineConfig:
    memory: MemoryParams = field(default_factory=MemoryParams)
    scheduler: SchedulerParams = field(default_factory=SchedulerParams)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    buffer: BufferParams = field(default_factory=BufferParams)
    batch_size: int = 256
    seed: int = 42
    snapshot_path: str | None = None
    exclude_replay_losses: bool = False
    strict_marking: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        """Sectioned document form, re-loadable via config_from_dict."""
        return {
            "memory": dataclasses.asdict(self.memory),
            "scheduler": dataclasses.asdict(self.scheduler),
            "sampler": dataclasses.asdict(self.sampler),
            "buffer": dataclasses.asdict(self.buffer),
            "engine": {
                "batch_size": self.batch_size,
                "seed": self.seed,
                "snapshot_path": self.snapshot_path,
                "exclude_replay_losses": self.exclude_replay_losses,
                "strict_marking": self.strict_marking,
            },
        }


_ENGINE_KEYS = ("batch_size", "seed", "snapshot_path", "exclude_replay_losses", "strict_marking")
_SECTIONS = ("memory", "scheduler", "sampler", "buffer", "engine")


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}",
            code="unknown_key",
        )
    try:
        return cls(**data)
    except ValidationError as exc:
        raise ConfigError(f"[{section}] {exc}", code="out_of_range") from exc
    except TypeError as exc:
        raise ConfigError(f"[{section}] {exc}", code="bad_value") from exc


def config_from_dict(doc: dict | None) -> EngineConfig:
    doc = dict(doc or {})
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(
            f"unknown section(s): {', '.join(sorted(unknown))}", code="unknown_key"
        )
    for name, section in doc.items():
        if section is not None and not isinstance(section, dict):
            raise ConfigError(f"section [{name}] must be a mapping", code="bad_value")

    mem_data = dict(doc.get("memory") or {})
    phi_data = mem_data.pop("phi", None)
    if phi_data is not None:
        if not isinstance(phi_data, dict):
            raise ConfigError("[memory.phi] must be a mapping", code="bad_value")
        mem_data["phi"] = _build_section(PhiConfig, phi_data, "memory.phi")
    memory = _build_section(MemoryParams, mem_data, "memory")

    scheduler = _build_section(SchedulerParams, dict(doc.get("scheduler") or {}), "scheduler")
    sampler = _build_section(SamplerParams, dict(doc.get("sampler") or {}), "sampler")
    buffer = _build_section(BufferParams, dict(doc.get("buffer") or {}), "buffer")

    eng = dict(doc.get("engine") or {})
    unknown = set(eng) - set(_ENGINE_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [engine]: {', '.join(sorted(unknown))}", code="unknown_key"
        )
    try:
        return EngineConfig(
            memory=memory, scheduler=scheduler, sampler=sampler, buffer=buffer, **eng
        )
    except ValidationError as exc:
        raise ConfigError(f"[engine] {exc}", code="out_of_range") from exc
    except TypeError as exc:
        raise ConfigError(f"[engine] {exc}", code="bad_value") from exc


def load_config(path_or_text: str) -> EngineConfig:
    """Load the engine configuration from a file path or document text."""
    if os.path.exists(path_or_text):
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = path_or_text
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}", code="malformed") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping", code="malformed")
    cfg = config_from_dict(doc)
    if cfg.sampler.rho_gap != cfg.memory.rho and "rho_gap" not in (doc.get("sampler") or {}):
        # gap-aware spacing coefficient mirrors the memory model unless set
        cfg.sampler.rho_gap = cfg.memory.rho
    if not math.isfinite(cfg.sampler.rho_gap):
        raise ConfigError("[sampler] rho_gap must be finite", code="out_of_range")
    return cfg
