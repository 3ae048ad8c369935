"""Threat to the VIP from the surrounding crowd.

A bystander closer than the safe distance, with an unobstructed line of sight
to the VIP, threatens it with probability ``exp(-A * dist / B)``. The threats
of independent bystanders combine as ``1 - prod(1 - TL_i)`` and the total
threat of an episode is that quantity integrated over time.

Landmark discs and bodyguard bodies block sight; bystanders never do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyTrajectory
from .state import WorldState


@dataclass(frozen=True)
class ThreatParams:
    A: float = 3.0
    B: float = 1.0
    safe_distance: float = 1.0

    def __post_init__(self):
        for name in ("A", "B", "safe_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_config(cls, cfg) -> "ThreatParams":
        return cls(cfg.threat_A, cfg.threat_B, cfg.safe_distance)


@dataclass(frozen=True)
class ThreatReport:
    per_bystander: np.ndarray
    instantaneous: float


def segment_point_distance(a, b, points) -> np.ndarray:
    """Distance from each of ``points`` (shape ``(k, 2)``) to the segment ``ab``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ab = b - a
    denom = ab @ ab
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def line_of_sight(a, b, obstacles: Iterable[tuple[Sequence[float], float]]) -> float:
    """1.0 if no obstacle disc cuts the segment from ``a`` to ``b``, else 0.0.

    A disc blocks when the distance from its centre to the segment is strictly
    less than its radius. Coincident endpoints always see each other.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        return 1.0
    obstacles = list(obstacles)
    if not obstacles:
        return 1.0
    centers = np.array([c for c, _ in obstacles], dtype=np.float64)
    radii = np.array([r for _, r in obstacles], dtype=np.float64)
    blocked = segment_point_distance(a, b, centers) < radii
    return 0.0 if blocked.any() else 1.0


def sight_matrix(origin, targets, centers, radii) -> np.ndarray:
    """Vectorised :func:`line_of_sight` from one origin to many targets."""
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    los = np.ones(len(targets))
    if len(targets) == 0 or len(centers) == 0:
        return los
    origin = np.asarray(origin, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    ab = targets - origin                       # (k, 2)
    denom = np.einsum("ij,ij->i", ab, ab)       # (k,)
    rel = centers - origin                      # (m, 2)
    safe = np.where(denom > 0, denom, 1.0)
    t = np.clip(ab @ rel.T / safe[:, None], 0.0, 1.0)
    closest = t[:, :, None] * ab[:, None, :]    # (k, m, 2), relative to origin
    dist = np.linalg.norm(rel[None] - closest, axis=2)
    blocked = (dist < np.asarray(radii)[None, :]).any(axis=1)
    los[blocked & (denom > 0)] = 0.0
    return los


def threat_level(dist: float, los: float, params: ThreatParams) -> float:
    if dist < 0:
        raise ValueError("distance must be non-negative")
    if los <= 0 or dist >= params.safe_distance:
        return 0.0
    return los * math.exp(-params.A * dist / params.B)


def combine(levels) -> float:
    """Probability that at least one independent threat succeeds."""
    return float(1.0 - np.prod(1.0 - np.asarray(levels, dtype=np.float64)))


def instantaneous_threat(world: WorldState, params: ThreatParams) -> ThreatReport:
    vip = world.positions[0]
    crowd = world.positions[world.bystander_slice]
    if len(crowd) == 0:
        return ThreatReport(np.zeros(0), 0.0)
    bg, lm = world.bodyguard_slice, world.landmark_slice
    centers = np.concatenate([world.positions[bg], world.positions[lm]])
    radii = np.concatenate([world.radii[bg], world.radii[lm]])
    dist = np.linalg.norm(crowd - vip, axis=1)
    los = sight_matrix(vip, crowd, centers, radii)
    levels = np.where(
        (los > 0) & (dist < params.safe_distance),
        los * np.exp(-params.A * dist / params.B),
        0.0,
    )
    return ThreatReport(levels, combine(levels))


def total_threat(trajectory: Sequence[WorldState], params: ThreatParams, dt: float) -> float:
    """Left-Riemann sum of the instantaneous threat over ``trajectory``.

    Pass the states at the start of each step (``s_0 ... s_{T-1}``); each is
    weighted by ``dt``.
    """
    if len(trajectory) == 0:
        raise EmptyTrajectory("total_threat needs at least one state")
    return float(sum(instantaneous_threat(w, params).instantaneous for w in trajectory) * dt)
