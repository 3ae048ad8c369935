"""Two-dimensional particle world with a VIP, bodyguards, a crowd and landmarks.

Time is discrete and space continuous. The VIP walks from landmark to
landmark, bystanders wander between random waypoints, and bodyguards apply
the forces chosen by their policies. All movable discs have the same mass;
landmarks are immovable.

Observation layout for bodyguard ``i`` (entity ``k = 1 + i``)::

    for every movable entity j != k, in entity order: p_j - p_k (2), v_j (2)
    for every landmark l:                              p_l - p_k (2)
    own position p_k (2), own velocity v_k (2)
    previous-step utterances of all bodyguards         n_bodyguards * C

so its length is ``4 * (n_bodyguards + n_bystanders) + 2 * n_landmarks + 4
+ n_bodyguards * C``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .config import WorldConfig
from .errors import ActionCountMismatch, IndexOutOfRange, NonFiniteAction, SpawnFailure
from .rng import RngStream
from .state import AgentAction, EntityKind, WorldState, one_hot
from .threat import ThreatParams, instantaneous_threat

MAX_SPAWN_TRIES = 1000


def observation_size(n_bodyguards: int, n_bystanders: int, n_landmarks: int, vocab: int) -> int:
    return 4 * (n_bodyguards + n_bystanders) + 2 * n_landmarks + 4 + n_bodyguards * vocab


def action_size(cfg: WorldConfig) -> int:
    return 2 + cfg.comm_vocab


def clip_norm(v: np.ndarray, limit: float) -> np.ndarray:
    """Scale rows of ``v`` down so that none has Euclidean norm above ``limit``."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.where(norm > limit, limit / np.where(norm > 0, norm, 1.0), 1.0)
    return v * scale


# ---------------------------------------------------------------------------
# reset


def _sample_free(rng, lo, hi, radius, placed, center=None, reach=None):
    for _ in range(MAX_SPAWN_TRIES):
        if center is None:
            p = rng.uniform(lo, hi, 2)
        else:
            # uniform over the disc of radius `reach` around `center`
            r = reach * np.sqrt(rng.random())
            theta = rng.uniform(0.0, 2 * np.pi)
            p = center + r * np.array([np.cos(theta), np.sin(theta)])
            if np.any(np.abs(p) > hi):
                continue
        if all(np.linalg.norm(p - q) > radius + rq for q, rq in placed):
            return p
    raise SpawnFailure(f"could not place an entity after {MAX_SPAWN_TRIES} tries")


def reset(cfg: WorldConfig, rng: RngStream) -> WorldState:
    """Spawn a fresh episode: nothing overlaps and everyone is silent."""
    w = cfg.world_halfwidth
    ra, rl = cfg.agent_radius, cfg.landmark_radius
    if ra >= w or (cfg.n_landmarks and rl >= w):
        raise SpawnFailure("entity radius does not fit in the arena")
    placed: list[tuple[np.ndarray, float]] = []

    landmarks = []
    for _ in range(cfg.n_landmarks):
        p = _sample_free(rng, -w + rl, w - rl, rl, placed)
        placed.append((p, rl))
        landmarks.append(p)

    vip = _sample_free(rng, -w + ra, w - ra, ra, placed)
    placed.append((vip, ra))

    guards = []
    reach = cfg.bodyguard_spawn_factor * cfg.safe_distance
    for _ in range(cfg.n_bodyguards):
        p = _sample_free(rng, -w + ra, w - ra, ra, placed, center=vip, reach=reach)
        placed.append((p, ra))
        guards.append(p)

    crowd = []
    for _ in range(cfg.n_bystanders):
        p = _sample_free(rng, -w + ra, w - ra, ra, placed)
        placed.append((p, ra))
        crowd.append(p)

    positions = np.array([vip] + guards + crowd + landmarks, dtype=np.float64).reshape(-1, 2)
    n = len(positions)
    radii = np.array([ra] * (n - cfg.n_landmarks) + [rl] * cfg.n_landmarks)
    waypoints = rng.uniform(-w + ra, w - ra, (cfg.n_bystanders, 2))
    if cfg.n_landmarks:
        goal_index = int(rng.integers(cfg.n_landmarks))
        vip_goal = landmarks[goal_index]
    else:
        goal_index = -1
        vip_goal = rng.uniform(-w + ra, w - ra, 2)
    return WorldState(
        positions=positions,
        velocities=np.zeros((n, 2)),
        radii=radii,
        n_bodyguards=cfg.n_bodyguards,
        n_bystanders=cfg.n_bystanders,
        n_landmarks=cfg.n_landmarks,
        utterances=np.tile(one_hot(0, cfg.comm_vocab), (cfg.n_bodyguards, 1)),
        step_index=0,
        goal_index=goal_index,
        vip_goal=vip_goal,
        waypoints=waypoints,
    )


# ---------------------------------------------------------------------------
# physics


def integrate(positions, velocities, forces, n_movable: int, cfg: WorldConfig):
    """Damped explicit-Euler update of the first ``n_movable`` entities."""
    pos = np.array(positions, dtype=np.float64)
    vel = np.array(velocities, dtype=np.float64)
    m = slice(0, n_movable)
    vel[m] = (1.0 - cfg.damping) * vel[m] + (np.asarray(forces)[m] / cfg.mass) * cfg.dt
    vel[m] = clip_norm(vel[m], cfg.max_speed)
    pos[m] = pos[m] + vel[m] * cfg.dt
    vel[n_movable:] = 0.0
    return pos, vel


def collide(positions, velocities, radii, n_movable: int, cfg: WorldConfig) -> np.ndarray:
    """Spring-like impulses pushing overlapping discs apart.

    Each overlapping pair receives an equal and opposite velocity change of
    ``contact_stiffness * overlap * dt / mass`` along the line of centres.
    Landmarks absorb nothing; the movable partner takes the whole impulse.
    """
    vel = np.array(velocities, dtype=np.float64)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    overlap = radii[:, None] + radii[None, :] - dist
    np.fill_diagonal(overlap, 0.0)
    movable = np.arange(len(positions)) < n_movable
    touching = (overlap > 0) & (movable[:, None] | movable[None, :])
    if not touching.any():
        return vel
    safe = np.where(dist > 0, dist, 1.0)
    # coincident centres are split along the x axis by index order
    idx = np.arange(len(positions))
    fallback = np.sign(idx[:, None] - idx[None, :])[:, :, None] * np.array([1.0, 0.0])
    normal = np.where((dist > 0)[:, :, None], diff / safe[:, :, None], fallback)
    mag = np.where(touching, cfg.contact_stiffness * overlap * cfg.dt / cfg.mass, 0.0)
    dv = (mag[:, :, None] * normal).sum(axis=1)
    vel[:n_movable] += dv[:n_movable]
    return vel


def wall(positions, velocities, radii, n_movable: int, cfg: WorldConfig):
    """Soft wall: spring push back for discs crossing the border, then a hard clamp."""
    pos = np.array(positions, dtype=np.float64)
    vel = np.array(velocities, dtype=np.float64)
    w = cfg.world_halfwidth
    m = slice(0, n_movable)
    r = radii[m, None]
    excess = np.abs(pos[m]) - (w - r)
    push = np.where(excess > 0, -np.sign(pos[m]) * cfg.wall_stiffness * excess * cfg.dt / cfg.mass, 0.0)
    vel[m] += push
    vel[m] = clip_norm(vel[m], cfg.max_speed)
    outside = np.abs(pos[m]) > w
    outward = np.sign(vel[m]) == np.sign(pos[m])
    vel[m] = np.where(outside & outward, 0.0, vel[m])
    pos[m] = np.clip(pos[m], -w, w)
    return pos, vel


# ---------------------------------------------------------------------------
# scripted agents


def _steer(pos, target, gain, limit):
    return clip_norm(gain * (target - pos), limit)


def _scripted_forces(world: WorldState, cfg: WorldConfig, rng: RngStream):
    """VIP and bystander forces plus their updated private targets.

    A fixed number of random draws is consumed every step regardless of the
    state, so the stream stays aligned across policies.
    """
    w, ra = cfg.world_halfwidth, cfg.agent_radius
    nby = world.n_bystanders
    redraw = rng.random(nby)
    candidates = rng.uniform(-w + ra, w - ra, (nby, 2))
    goal_pick = rng.random()
    free_goal = rng.uniform(-w + ra, w - ra, 2)

    pos = world.positions
    vip = pos[0]
    goal_index, vip_goal = world.goal_index, np.array(world.vip_goal)
    if goal_index >= 0:
        reach = ra + cfg.landmark_radius + cfg.waypoint_tolerance
        if np.linalg.norm(vip_goal - vip) < reach and world.n_landmarks > 1:
            # move on to a different landmark
            offset = 1 + int(goal_pick * (world.n_landmarks - 1))
            goal_index = (goal_index + offset) % world.n_landmarks
            vip_goal = np.array(pos[world.landmark_slice][goal_index])
    elif np.linalg.norm(vip_goal - vip) < cfg.waypoint_tolerance:
        vip_goal = free_goal
    vip_force = _steer(vip, vip_goal, cfg.vip_gain, cfg.vip_max_force)

    crowd = pos[world.bystander_slice]
    waypoints = np.array(world.waypoints)
    if nby:
        arrived = np.linalg.norm(waypoints - crowd, axis=1) < cfg.waypoint_tolerance
        new = arrived | (redraw < cfg.bystander_redraw_prob)
        waypoints[new] = candidates[new]
        crowd_force = _steer(crowd, waypoints, 1.0, cfg.bystander_max_force)
    else:
        crowd_force = np.zeros((0, 2))
    return vip_force, crowd_force, goal_index, vip_goal, waypoints


def step(world: WorldState, actions: Sequence[AgentAction], cfg: WorldConfig, rng: RngStream):
    """Advance one step. Returns ``(next_world, done)``."""
    if len(actions) != world.n_bodyguards:
        raise ActionCountMismatch(f"expected {world.n_bodyguards} actions, got {len(actions)}")
    guard_force = np.array([np.asarray(a.force, dtype=np.float64) for a in actions]).reshape(-1, 2)
    utter = np.array([np.asarray(a.utterance, dtype=np.float64) for a in actions])
    if not (np.isfinite(guard_force).all() and np.isfinite(utter).all()):
        raise NonFiniteAction("actions must be finite")
    if utter.shape != (world.n_bodyguards, cfg.comm_vocab):
        raise NonFiniteAction(f"utterances must have length {cfg.comm_vocab}")
    guard_force = clip_norm(guard_force, cfg.max_force)

    vip_force, crowd_force, goal_index, vip_goal, waypoints = _scripted_forces(world, cfg, rng)
    n_mov = world.movable_count
    forces = np.zeros_like(world.positions)
    forces[0] = vip_force
    forces[world.bodyguard_slice] = guard_force
    forces[world.bystander_slice] = crowd_force

    pos, vel = integrate(world.positions, world.velocities, forces, n_mov, cfg)
    vel = collide(pos, vel, world.radii, n_mov, cfg)
    vel[:n_mov] = clip_norm(vel[:n_mov], cfg.max_speed)
    pos, vel = wall(pos, vel, world.radii, n_mov, cfg)

    nxt = world.replace(
        positions=pos,
        velocities=vel,
        utterances=utter,
        step_index=world.step_index + 1,
        goal_index=goal_index,
        vip_goal=vip_goal,
        waypoints=waypoints,
    )
    return nxt, nxt.step_index >= cfg.episode_length


# ---------------------------------------------------------------------------
# observations


def observe_all(world: WorldState, cfg: WorldConfig) -> np.ndarray:
    """Observations of every bodyguard, one row each.

    Layout per agent: offset to the VIP and VIP velocity; VIP-relative
    position and velocity of the other bodyguards (index order) and of the
    bystanders (nearest to the VIP first); VIP-relative landmark positions;
    own absolute position and velocity; last step's utterances of all
    bodyguards.
    """
    nb = world.n_bodyguards
    pos, vel = world.positions, world.velocities
    vip = pos[0]
    crowd = np.arange(world.bystander_slice.start, world.bystander_slice.stop)
    if len(crowd):
        crowd = crowd[np.argsort(np.linalg.norm(pos[crowd] - vip, axis=1), kind="stable")]
    lm = (pos[world.landmark_slice] - vip).reshape(-1)
    talk = world.utterances.reshape(-1)
    rows = []
    for k in range(1, 1 + nb):
        mates = [j for j in range(1, 1 + nb) if j != k]
        idx = np.concatenate([np.array(mates, dtype=int), crowd]).astype(int)
        block = np.concatenate([pos[idx] - vip, vel[idx]], axis=1).reshape(-1)
        head = np.concatenate([vip - pos[k], vel[0]])
        rows.append(np.concatenate([head, block, lm, pos[k], vel[k], talk]))
    return np.array(rows).reshape(nb, -1)


def observe(world: WorldState, agent_index: int, cfg: WorldConfig) -> np.ndarray:
    if not 0 <= agent_index < world.n_bodyguards:
        raise IndexOutOfRange(f"agent {agent_index} out of range [0, {world.n_bodyguards})")
    return observe_all(world, cfg)[agent_index]


# ---------------------------------------------------------------------------
# trajectory dump

_KIND_NAMES = {
    EntityKind.VIP: "vip",
    EntityKind.BODYGUARD: "bodyguard",
    EntityKind.BYSTANDER: "bystander",
    EntityKind.LANDMARK: "landmark",
}


def fmt(x: float) -> str:
    return f"{x:.9g}"


def trajectory_rows(states: Sequence[WorldState], params: ThreatParams):
    first = states[0]
    header = ["step_index"]
    for j in range(first.n_entities):
        header += [f"e{j}_kind", f"e{j}_x", f"e{j}_y", f"e{j}_vx", f"e{j}_vy"]
    header += [f"u{i}" for i in range(first.n_bodyguards)]
    header.append("threat")
    yield header
    for s in states:
        row = [str(s.step_index)]
        for kind, p, v in zip(s.kinds, s.positions, s.velocities):
            row += [_KIND_NAMES[kind], fmt(p[0]), fmt(p[1]), fmt(v[0]), fmt(v[1])]
        row += [str(int(u)) for u in s.utterance_indices()]
        row.append(fmt(instantaneous_threat(s, params).instantaneous))
        yield row


def write_trajectory_csv(dest: str | Path | IO[str], states: Sequence[WorldState],
                         params: ThreatParams) -> None:
    """One CSV row per state: entity kinematics, utterance indices and threat."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            csv.writer(fh).writerows(trajectory_rows(states, params))
    else:
        csv.writer(dest).writerows(trajectory_rows(states, params))
