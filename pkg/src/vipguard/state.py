"""Value types describing the world and the agents' actions.

Entity data is stored column-wise (one ``(n, 2)`` array for positions, one for
velocities, ...) because every consumer works on all entities at once. The
fixed entity order is VIP, bodyguards, bystanders, landmarks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class EntityKind(IntEnum):
    VIP = 0
    BODYGUARD = 1
    BYSTANDER = 2
    LANDMARK = 3


@dataclass(frozen=True)
class EntityState:
    kind: EntityKind
    position: np.ndarray
    velocity: np.ndarray
    radius: float


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class WorldState:
    """Full Markov state of one episode.

    ``utterances`` holds one row per bodyguard: the symbol each agent emitted on
    the previous step. ``vip_goal`` and ``waypoints`` are the scripted agents'
    private targets; they are part of the state so that stepping is a pure
    function of ``(world, actions, rng)``.
    """

    positions: np.ndarray
    velocities: np.ndarray
    radii: np.ndarray
    n_bodyguards: int
    n_bystanders: int
    n_landmarks: int
    utterances: np.ndarray
    step_index: int = 0
    goal_index: int = -1
    vip_goal: np.ndarray | None = None
    waypoints: np.ndarray | None = None

    def __post_init__(self):
        for name in ("positions", "velocities", "radii", "utterances"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        goal = self.positions[0] if self.vip_goal is None else self.vip_goal
        object.__setattr__(self, "vip_goal", _frozen(goal))
        wp = np.zeros((self.n_bystanders, 2)) if self.waypoints is None else self.waypoints
        object.__setattr__(self, "waypoints", _frozen(np.reshape(wp, (self.n_bystanders, 2))))
        n = 1 + self.n_bodyguards + self.n_bystanders + self.n_landmarks
        if self.positions.shape != (n, 2) or self.velocities.shape != (n, 2):
            raise ValueError(f"expected ({n}, 2) position/velocity arrays")
        if self.radii.shape != (n,):
            raise ValueError(f"expected {n} radii")
        if self.utterances.ndim != 2 or self.utterances.shape[0] != self.n_bodyguards:
            raise ValueError("need one utterance row per bodyguard")

    @property
    def n_entities(self) -> int:
        return self.positions.shape[0]

    @property
    def bodyguard_slice(self) -> slice:
        return slice(1, 1 + self.n_bodyguards)

    @property
    def bystander_slice(self) -> slice:
        start = 1 + self.n_bodyguards
        return slice(start, start + self.n_bystanders)

    @property
    def landmark_slice(self) -> slice:
        start = 1 + self.n_bodyguards + self.n_bystanders
        return slice(start, start + self.n_landmarks)

    @property
    def movable_count(self) -> int:
        return 1 + self.n_bodyguards + self.n_bystanders

    @property
    def kinds(self) -> list[EntityKind]:
        return (
            [EntityKind.VIP]
            + [EntityKind.BODYGUARD] * self.n_bodyguards
            + [EntityKind.BYSTANDER] * self.n_bystanders
            + [EntityKind.LANDMARK] * self.n_landmarks
        )

    @property
    def vip_position(self) -> np.ndarray:
        return self.positions[0]

    @property
    def entities(self) -> list[EntityState]:
        return [
            EntityState(kind, self.positions[i], self.velocities[i], float(self.radii[i]))
            for i, kind in enumerate(self.kinds)
        ]

    def utterance_indices(self) -> np.ndarray:
        return np.argmax(self.utterances, axis=1)

    def replace(self, **changes) -> "WorldState":
        data = {
            name: getattr(self, name)
            for name in ("positions", "velocities", "radii", "n_bodyguards", "n_bystanders",
                         "n_landmarks", "utterances", "step_index", "goal_index", "vip_goal",
                         "waypoints")
        }
        data.update(changes)
        return WorldState(**data)

    def same_as(self, other: "WorldState") -> bool:
        """Bit-for-bit equality of every field."""
        if (self.n_bodyguards, self.n_bystanders, self.n_landmarks, self.step_index,
                self.goal_index) != (other.n_bodyguards, other.n_bystanders,
                                     other.n_landmarks, other.step_index, other.goal_index):
            return False
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("positions", "velocities", "radii", "utterances", "vip_goal", "waypoints")
        )


@dataclass(frozen=True)
class AgentAction:
    """Control force plus a one-hot utterance; index 0 of ``utterance`` is silence."""

    force: np.ndarray
    utterance: np.ndarray

    @classmethod
    def silent(cls, force, vocab: int) -> "AgentAction":
        return cls(np.asarray(force, dtype=np.float64), one_hot(0, vocab))

    @property
    def symbol(self) -> int:
        return int(np.argmax(self.utterance))

    @property
    def speaks(self) -> bool:
        return self.symbol != 0

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.utterance])


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v
