"""JSON config for the command line tools.

A config file holds any subset of the sections below; given values are
merged over the defaults.  Unknown sections or keys are errors rather
than silent typo sinks.  Command line flags override the file.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import AI4ARError


class ConfigError(AI4ARError):
    pass


@dataclass(frozen=True)
class GatewaySection:
    listen_addr: str = "127.0.0.1:7401"
    default_deadline_ms: int = 100
    heartbeat_interval_s: float = 1.0
    missed_heartbeats: int = 3
    max_in_flight: int = 64
    stats_log: Optional[str] = None

    def __post_init__(self):
        if self.default_deadline_ms <= 0:
            raise ConfigError("gateway.default_deadline_ms must be > 0")
        if self.heartbeat_interval_s <= 0:
            raise ConfigError("gateway.heartbeat_interval_s must be > 0")
        if self.missed_heartbeats < 1:
            raise ConfigError("gateway.missed_heartbeats must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("gateway.max_in_flight must be >= 1")


@dataclass(frozen=True)
class ReplaySection:
    fps: float = 30.0
    drain_timeout_s: float = 5.0

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigError("replay.fps must be > 0")
        if self.drain_timeout_s < 0:
            raise ConfigError("replay.drain_timeout_s must be >= 0")


@dataclass(frozen=True)
class EvalSection:
    confidence_threshold: float = 0.5
    pose_threshold_fraction: float = 0.1

    def __post_init__(self):
        if not 0 <= self.confidence_threshold <= 1:
            raise ConfigError("eval.confidence_threshold must be in [0, 1]")
        if not 0 < self.pose_threshold_fraction < 1:
            raise ConfigError("eval.pose_threshold_fraction must be in (0, 1)")


@dataclass(frozen=True)
class PerturbSection:
    max_shift_fraction: float = 0.25
    scale_low: float = 0.75
    scale_high: float = 1.25
    repetitions: int = 5

    def __post_init__(self):
        if not 0 <= self.max_shift_fraction < 1:
            raise ConfigError("perturb.max_shift_fraction must be in [0, 1)")
        if not 0 < self.scale_low <= self.scale_high:
            raise ConfigError("perturb needs 0 < scale_low <= scale_high")
        if self.repetitions < 1:
            raise ConfigError("perturb.repetitions must be >= 1")


@dataclass(frozen=True)
class AppConfig:
    gateway: GatewaySection = field(default_factory=GatewaySection)
    replay: ReplaySection = field(default_factory=ReplaySection)
    eval: EvalSection = field(default_factory=EvalSection)
    perturb: PerturbSection = field(default_factory=PerturbSection)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {"gateway": GatewaySection, "replay": ReplaySection,
             "eval": EvalSection, "perturb": PerturbSection}


def _build_section(cls, name: str, given: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(given) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: "
                          f"{', '.join(sorted(unknown))}")
    try:
        return cls(**given)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value in section {name!r}: {err}") from err


def load_config(path: Optional[str | Path]) -> AppConfig:
    """Load a config file, or the defaults when path is None or absent.

    A path that exists but fails to parse or validate is an error; an
    absent file only gets a stderr note, so tools run out of the box.
    """
    if path is None:
        return AppConfig()
    p = Path(path)
    if not p.exists():
        print(f"note: config {p} not found, using defaults", file=sys.stderr)
        return AppConfig()
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {p}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config section(s): "
                          f"{', '.join(sorted(unknown))}")
    sections = {}
    for name, cls in _SECTIONS.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"config section {name!r} must be a JSON object")
        sections[name] = _build_section(cls, name, given)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return AppConfig(seed=seed, **sections)
