"""Per-bodyguard reward functions.

All four rewards are non-positive. ``threat_only`` is shared by the whole
team; the others add a per-agent penalty for leaving the ``[m, d]`` distance
band around the VIP and, for ``comm_penalty``, for speaking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import RewardKind, WorldConfig
from .state import AgentAction, WorldState
from .threat import ThreatParams, instantaneous_threat

THREAT_EPSILON = 1e-9


@dataclass(frozen=True)
class RewardBreakdown:
    threat_term: float
    distance_term: float
    comm_term: float
    total: float


def threat_only(world: WorldState, params: ThreatParams) -> float:
    levels = instantaneous_threat(world, params).per_bystander
    return float(-1.0 + np.prod(1.0 - levels))


def distance_band(world: WorldState, agent_index: int, m: float, d: float) -> float:
    dist = float(np.linalg.norm(world.positions[1 + agent_index] - world.positions[0]))
    return 0.0 if m <= dist <= d else -1.0


def binary_threat(world: WorldState, agent_index: int, params: ThreatParams, m: float, d: float,
                  eps: float = THREAT_EPSILON) -> float:
    threatened = instantaneous_threat(world, params).instantaneous > eps
    return (-1.0 if threatened else 0.0) + distance_band(world, agent_index, m, d)


def composite(world: WorldState, agent_index: int, params: ThreatParams, m: float, d: float) -> float:
    return threat_only(world, params) + distance_band(world, agent_index, m, d)


def comm_penalty(world: WorldState, agent_index: int, action: AgentAction, params: ThreatParams,
                 m: float, d: float, p: float) -> float:
    return composite(world, agent_index, params, m, d) - (p if action.speaks else 0.0)


def breakdowns(world: WorldState, actions: Sequence[AgentAction], cfg: WorldConfig) -> list[RewardBreakdown]:
    """Reward terms of every bodyguard for ``cfg.reward_kind`` on a post-step state.

    Computes the crowd threat once and shares it across agents.
    """
    params = ThreatParams.from_config(cfg)
    report = instantaneous_threat(world, params)
    shared = float(-1.0 + np.prod(1.0 - report.per_bystander))
    kind = RewardKind(cfg.reward_kind)
    out = []
    for i, action in enumerate(actions):
        band = distance_band(world, i, cfg.min_distance, cfg.band_distance)
        if kind is RewardKind.THREAT_ONLY:
            threat, band = shared, 0.0
        elif kind is RewardKind.BINARY_THREAT:
            threat = -1.0 if report.instantaneous > cfg.threat_epsilon else 0.0
        else:
            threat = shared
        talk = 0.0
        if kind is RewardKind.COMM_PENALTY and action.speaks:
            talk = -cfg.comm_penalty
        out.append(RewardBreakdown(threat, band, talk, threat + band + talk))
    return out


def team_rewards(world: WorldState, actions: Sequence[AgentAction], cfg: WorldConfig) -> np.ndarray:
    return np.array([b.total for b in breakdowns(world, actions, cfg)])
