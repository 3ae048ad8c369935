"""Scenario, physics, threat, reward and training settings in one record.

A :class:`WorldConfig` round-trips through a flat JSON object whose keys are
exactly the dataclass field names. Unknown keys are rejected so that typos in
hand-written config files fail loudly instead of silently using a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import ConfigError


class RewardKind(str, Enum):
    THREAT_ONLY = "threat_only"
    BINARY_THREAT = "binary_threat"
    COMPOSITE = "composite"
    COMM_PENALTY = "comm_penalty"


class LearnerKind(str, Enum):
    DDPG = "ddpg"
    MADDPG = "maddpg"


U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class WorldConfig:
    # scenario
    n_bodyguards: int = 2
    n_bystanders: int = 10
    n_landmarks: int = 3
    world_halfwidth: float = 1.0
    agent_radius: float = 0.05
    landmark_radius: float = 0.10
    # physics
    dt: float = 0.1
    damping: float = 0.25
    mass: float = 1.0
    max_speed: float = 1.0
    max_force: float = 1.0
    contact_stiffness: float = 100.0
    wall_stiffness: float = 100.0
    episode_length: int = 25
    # scripted behaviour
    vip_gain: float = 1.0
    vip_max_force: float = 0.5
    bystander_max_force: float = 0.5
    bystander_redraw_prob: float = 0.05
    waypoint_tolerance: float = 0.05
    bodyguard_spawn_factor: float = 3.0
    # threat
    threat_A: float = 3.0
    threat_B: float = 1.0
    safe_distance: float = 1.0
    threat_epsilon: float = 1e-9
    # rewards
    min_distance: float = 0.1
    band_distance: float = 1.0
    comm_penalty: float = 0.05
    comm_vocab: int = 10
    communication_enabled: bool = True
    reward_kind: RewardKind = RewardKind.COMPOSITE
    # learning
    learner_kind: LearnerKind = LearnerKind.MADDPG
    gamma: float = 0.95
    tau: float = 0.01
    replay_capacity: int = 1_000_000
    batch_size: int = 128
    warmup_batches: int = 10
    update_every: int = 1
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    grad_clip: float = 0.5
    exploration_sigma: float = 0.3
    utterance_epsilon: float = 0.1
    hidden_sizes: tuple[int, ...] = (64, 64)
    shared_params: bool = False
    # harness
    train_episodes: int = 10_000
    eval_episodes: int = 10
    eval_interval: int = 100
    checkpoint_interval: int = 1000
    seed: int = 0

    def replace(self, **changes: Any) -> "WorldConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_entities(self) -> int:
        return 1 + self.n_bodyguards + self.n_bystanders + self.n_landmarks

    @property
    def warmup(self) -> int:
        """Transitions collected before the first gradient update."""
        return self.warmup_batches * self.batch_size

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorldConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            kwargs[key] = _coerce(key, known[key], value)
        return validate_config(cls(**kwargs))

    @classmethod
    def from_json(cls, text: str) -> "WorldConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("<file>", "top level must be an object")
        return cls.from_dict(data)

    def with_overrides(self, overrides: list[str]) -> "WorldConfig":
        """Apply ``key=value`` strings; values are parsed as JSON when possible."""
        data = self.to_dict()
        for item in overrides:
            key, sep, raw = item.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(key or item, "override must look like key=value")
            if key not in data:
                raise ConfigError(key, "unknown configuration key")
            try:
                data[key] = json.loads(raw)
            except json.JSONDecodeError:
                data[key] = raw
        return WorldConfig.from_dict(data)


def load_config(path: str | Path) -> WorldConfig:
    return WorldConfig.from_json(Path(path).read_text())


def save_config(cfg: WorldConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_json())


_ENUMS = {"reward_kind": RewardKind, "learner_kind": LearnerKind}


def _coerce(name: str, f: dataclasses.Field, value: Any) -> Any:
    if name in _ENUMS:
        try:
            return _ENUMS[name](value)
        except ValueError:
            choices = ", ".join(e.value for e in _ENUMS[name])
            raise ConfigError(name, f"expected one of {choices}, got {value!r}") from None
    default = f.default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(name, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(name, f"expected a list of integers, got {value!r}")
        return tuple(value)
    return value


def _check(ok: bool, name: str, reason: str) -> None:
    if not ok:
        raise ConfigError(name, reason)


def validate_config(cfg: WorldConfig) -> WorldConfig:
    """Return ``cfg`` unchanged if it is consistent, else raise on the first bad field."""
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, float):
            _check(math.isfinite(v), f.name, "must be finite")

    _check(1 <= cfg.n_bodyguards <= 8, "n_bodyguards", "must be in [1, 8]")
    _check(cfg.n_bystanders >= 0, "n_bystanders", "must be >= 0")
    _check(cfg.n_landmarks >= 0, "n_landmarks", "must be >= 0")
    for name in ("world_halfwidth", "agent_radius", "landmark_radius", "dt", "mass",
                 "max_speed", "max_force", "threat_A", "threat_B", "safe_distance"):
        _check(getattr(cfg, name) > 0, name, "must be > 0")
    _check(0 <= cfg.damping < 1, "damping", "must be in [0, 1)")
    for name in ("contact_stiffness", "wall_stiffness", "vip_gain", "vip_max_force",
                 "bystander_max_force", "waypoint_tolerance", "threat_epsilon"):
        _check(getattr(cfg, name) >= 0, name, "must be >= 0")
    _check(0 <= cfg.bystander_redraw_prob <= 1, "bystander_redraw_prob", "must be in [0, 1]")
    _check(cfg.bodyguard_spawn_factor > 0, "bodyguard_spawn_factor", "must be > 0")
    _check(cfg.episode_length > 0, "episode_length", "must be > 0")

    _check(cfg.min_distance >= 0, "min_distance", "must be >= 0")
    _check(cfg.min_distance < cfg.band_distance, "band_distance",
           "must exceed min_distance (m < d)")
    _check(cfg.band_distance <= cfg.safe_distance, "band_distance",
           "must not exceed safe_distance (d <= SafeDist)")
    _check(cfg.safe_distance <= 2 * cfg.world_halfwidth, "safe_distance",
           "must not exceed 2 * world_halfwidth")
    _check(cfg.comm_penalty >= 0, "comm_penalty", "must be >= 0")
    _check(cfg.comm_vocab >= 1, "comm_vocab", "must be >= 1")

    _check(0 <= cfg.gamma <= 1, "gamma", "must be in [0, 1]")
    _check(0 < cfg.tau <= 1, "tau", "must be in (0, 1]")
    _check(cfg.replay_capacity >= 1, "replay_capacity", "must be >= 1")
    _check(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    _check(cfg.warmup_batches >= 1, "warmup_batches", "must be >= 1")
    _check(cfg.update_every >= 1, "update_every", "must be >= 1")
    _check(cfg.actor_lr > 0, "actor_lr", "must be > 0")
    _check(cfg.critic_lr > 0, "critic_lr", "must be > 0")
    _check(cfg.grad_clip > 0, "grad_clip", "must be > 0")
    _check(cfg.exploration_sigma >= 0, "exploration_sigma", "must be >= 0")
    _check(0 <= cfg.utterance_epsilon <= 1, "utterance_epsilon", "must be in [0, 1]")
    _check(all(h >= 1 for h in cfg.hidden_sizes), "hidden_sizes", "sizes must be >= 1")

    _check(cfg.train_episodes >= 0, "train_episodes", "must be >= 0")
    _check(cfg.eval_episodes >= 1, "eval_episodes", "must be >= 1")
    _check(cfg.eval_interval >= 1, "eval_interval", "must be >= 1")
    _check(cfg.checkpoint_interval >= 1, "checkpoint_interval", "must be >= 1")
    _check(0 <= cfg.seed <= U64_MAX, "seed", "must be an unsigned 64-bit integer")
    return cfg
