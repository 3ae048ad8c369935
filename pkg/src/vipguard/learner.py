"""Replay memory and deterministic-policy-gradient updates (DDPG and MADDPG).

Every bodyguard owns an actor, a critic and slowly tracking target copies of
both. The actor emits ``max_force * tanh`` for the 2-D force and a softmax
over the ``C`` utterance symbols. Execution uses the argmax symbol as a one-hot
vector; the actor update feeds that hard one-hot to the critic and sends the
critic's gradient back through the softmax probabilities (straight-through).

DDPG critics see ``(own observation, own action)``. MADDPG critics see
``(own observation, actions of all agents)``; agent ``i``'s actor is improved
by differentiating its critic with respect to slot ``i`` only, with the other
agents' actions taken from the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import clip_norm
from .errors import InsufficientData, NonFiniteLoss, ShapeMismatch
from .nn import (Adam, Mlp, apply_update, backward, forward, forward_with_cache, load_adam, load_mlp,
                 save_adam, save_mlp, soft_update)
from .rng import RngStream
from .state import AgentAction, one_hot


@dataclass
class Transition:
    observations: np.ndarray       # (n_agents, obs_dim)
    actions: np.ndarray            # (n_agents, 2 + C)
    rewards: np.ndarray            # (n_agents,)
    next_observations: np.ndarray  # (n_agents, obs_dim)
    done: bool


@dataclass
class Batch:
    """Stacked transitions; ``batch[k]`` gives the k-th one back."""

    observations: np.ndarray       # (B, n_agents, obs_dim)
    actions: np.ndarray            # (B, n_agents, act_dim)
    rewards: np.ndarray            # (B, n_agents)
    next_observations: np.ndarray
    done: np.ndarray               # (B,)

    def __len__(self) -> int:
        return len(self.done)

    def __getitem__(self, k: int) -> Transition:
        return Transition(self.observations[k], self.actions[k], self.rewards[k],
                          self.next_observations[k], bool(self.done[k]))

    @classmethod
    def stack(cls, transitions: Sequence[Transition]) -> "Batch":
        return cls(
            np.array([t.observations for t in transitions], dtype=np.float64),
            np.array([t.actions for t in transitions], dtype=np.float64),
            np.array([t.rewards for t in transitions], dtype=np.float64),
            np.array([t.next_observations for t in transitions], dtype=np.float64),
            np.array([t.done for t in transitions], dtype=np.float64),
        )


class ReplayBuffer:
    """Bounded FIFO ring of transitions; storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.n_agents, self.obs_dim, self.act_dim = n_agents, obs_dim, act_dim
        self.size = 0
        self.inserted = 0
        self._head = 0   # slot the next push overwrites once full
        self._alloc(min(capacity, 1024))

    def _alloc(self, n: int) -> None:
        old = getattr(self, "_obs", None)
        shapes = {
            "_obs": (n, self.n_agents, self.obs_dim),
            "_act": (n, self.n_agents, self.act_dim),
            "_rew": (n, self.n_agents),
            "_next": (n, self.n_agents, self.obs_dim),
            "_done": (n,),
        }
        for name, shape in shapes.items():
            fresh = np.zeros(shape)
            if old is not None:
                fresh[: self.size] = getattr(self, name)[: self.size]
            setattr(self, name, fresh)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> "ReplayBuffer":
        obs = np.asarray(t.observations, dtype=np.float64)
        act = np.asarray(t.actions, dtype=np.float64)
        rew = np.asarray(t.rewards, dtype=np.float64)
        nxt = np.asarray(t.next_observations, dtype=np.float64)
        n = self.n_agents
        if (obs.shape != (n, self.obs_dim) or nxt.shape != (n, self.obs_dim)
                or act.shape != (n, self.act_dim) or rew.shape != (n,)):
            raise ShapeMismatch("transition does not match the buffer layout")
        if self.size < self.capacity:
            if self.size == len(self._done):
                self._alloc(min(self.capacity, 2 * len(self._done)))
            slot = self.size
            self.size += 1
        else:
            slot = self._head
            self._head = (self._head + 1) % self.capacity
        self._obs[slot], self._act[slot], self._rew[slot] = obs, act, rew
        self._next[slot], self._done[slot] = nxt, float(t.done)
        self.inserted += 1
        return self

    def _order(self) -> np.ndarray:
        """Physical slots from oldest to newest."""
        return (self._head + np.arange(self.size)) % max(self.size, 1)

    def transitions(self) -> list[Transition]:
        return [self._gather(np.array([k]))[0] for k in self._order()]

    def _gather(self, idx: np.ndarray) -> Batch:
        return Batch(self._obs[idx], self._act[idx], self._rew[idx], self._next[idx], self._done[idx])

    def sample(self, batch_size: int, rng: RngStream) -> Batch:
        """Uniform sample with replacement; any non-empty buffer can fill any batch."""
        if batch_size < 1 or self.size == 0:
            raise InsufficientData(f"cannot draw {batch_size} transitions from {self.size}")
        return self._gather(rng.integers(0, self.size, batch_size))


def buffer_push(buf: ReplayBuffer, t: Transition) -> ReplayBuffer:
    return buf.push(t)


def buffer_sample(buf: ReplayBuffer, batch_size: int, rng: RngStream) -> Batch:
    return buf.sample(batch_size, rng)


# ---------------------------------------------------------------------------
# agents


@dataclass
class AgentLearner:
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    actor_opt: Adam
    critic_opt: Adam
    max_force: float = 1.0
    communicate: bool = True

    @classmethod
    def create(cls, obs_dim: int, vocab: int, critic_action_dim: int, hidden: Sequence[int],
               actor_lr: float, critic_lr: float, rng: RngStream, max_force: float = 1.0,
               communicate: bool = True) -> "AgentLearner":
        actor = Mlp([obs_dim, *hidden, 2 + vocab], (("tanh", 2), ("softmax", vocab)), rng)
        critic = Mlp([obs_dim + critic_action_dim, *hidden, 1], rng=rng)
        return cls(actor, critic, actor.copy(), critic.copy(), Adam.for_net(actor, actor_lr),
                   Adam.for_net(critic, critic_lr), max_force, communicate)

    @property
    def vocab(self) -> int:
        return self.actor.n_outputs - 2

    @property
    def obs_dim(self) -> int:
        return self.actor.n_inputs


def _hard_actions(learner: AgentLearner, out: np.ndarray) -> np.ndarray:
    """Executed action rows (force ++ one-hot) from raw actor outputs."""
    out = np.atleast_2d(out)
    act = np.zeros_like(out)
    act[:, :2] = learner.max_force * out[:, :2]
    sym = np.argmax(out[:, 2:], axis=1) if learner.communicate else np.zeros(len(out), dtype=int)
    act[np.arange(len(out)), 2 + sym] = 1.0
    return act


def greedy_action(learner: AgentLearner, obs) -> AgentAction:
    return select_action(learner, obs, 0.0, None)


def select_action(learner: AgentLearner, obs, sigma: float, rng: RngStream | None,
                  epsilon: float = 0.0) -> AgentAction:
    """Actor output plus Gaussian force noise and epsilon-random utterances.

    With ``sigma == 0`` and ``epsilon == 0`` the result is the greedy policy
    and ``rng`` may be None.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (learner.obs_dim,):
        raise ShapeMismatch(f"observation must have length {learner.obs_dim}")
    out = forward(learner.actor, obs)
    force = learner.max_force * out[:2]
    symbol = int(np.argmax(out[2:])) if learner.communicate else 0
    if rng is not None:
        noise = rng.normal(0.0, 1.0, 2)
        explore = rng.random()
        random_symbol = int(rng.integers(learner.vocab))
        force = force + sigma * noise
        if learner.communicate and explore < epsilon:
            symbol = random_symbol
    elif sigma or epsilon:
        raise ValueError("exploration needs an rng")
    return AgentAction(clip_norm(force, learner.max_force), one_hot(symbol, learner.vocab))


def _update_one(learners: Sequence[AgentLearner], i: int, batch: Batch, slots: Sequence[int],
                next_actions: dict[int, np.ndarray], gamma: float, grad_clip: float | None):
    """Critic regression then actor ascent for agent ``i``."""
    me = learners[i]
    B = len(batch)
    obs = batch.observations[:, i]
    act_dim = batch.actions.shape[2]

    x_next = np.concatenate([batch.next_observations[:, i]] + [next_actions[k] for k in slots], axis=1)
    q_next = forward(me.target_critic, x_next)[:, 0]
    y = batch.rewards[:, i] + gamma * (1.0 - batch.done) * q_next

    x = np.concatenate([obs] + [batch.actions[:, k] for k in slots], axis=1)
    q, cache = forward_with_cache(me.critic, x)
    td = q[:, 0] - y
    critic_loss = float(np.mean(td * td))
    if not np.isfinite(critic_loss):
        raise NonFiniteLoss(f"critic loss of agent {i} is not finite")
    grads, _ = backward(me.critic, x, (2.0 * td / B)[:, None], cache)
    if grad_clip:
        grads = grads.clip(grad_clip)
    apply_update(me.critic, grads, me.critic_opt)

    out, actor_cache = forward_with_cache(me.actor, obs)
    mine = _hard_actions(me, out)
    start = obs.shape[1] + slots.index(i) * act_dim
    x_pi = x.copy()
    x_pi[:, start:start + act_dim] = mine
    q_pi, cache = forward_with_cache(me.critic, x_pi)
    objective = float(np.mean(q_pi))
    if not np.isfinite(objective):
        raise NonFiniteLoss(f"actor objective of agent {i} is not finite")
    _, dx = backward(me.critic, x_pi, np.full((B, 1), 1.0 / B), cache)
    da = dx[:, start:start + act_dim]
    g_out = np.empty_like(da)
    g_out[:, :2] = da[:, :2] * me.max_force
    g_out[:, 2:] = da[:, 2:] if me.communicate else 0.0
    # ascend mean Q: descend its negation
    grads, _ = backward(me.actor, obs, -g_out, actor_cache)
    if grad_clip:
        grads = grads.clip(grad_clip)
    apply_update(me.actor, grads, me.actor_opt)
    return critic_loss, objective


def _target_actions(learner: AgentLearner, next_obs: np.ndarray) -> np.ndarray:
    return _hard_actions(learner, forward(learner.target_actor, next_obs))


def _soft_all(learners: Sequence[AgentLearner], tau: float) -> None:
    seen = set()
    for ln in learners:
        if id(ln) in seen:
            continue
        seen.add(id(ln))
        soft_update(ln.target_actor, ln.actor, tau)
        soft_update(ln.target_critic, ln.critic, tau)


def ddpg_update(learner: AgentLearner, batch: Batch, agent_index: int, gamma: float, tau: float,
                grad_clip: float | None = 0.5) -> tuple[float, float]:
    """Decentralised update from agent ``agent_index``'s slice of the batch.

    Returns ``(critic_loss, actor_objective)``; the learner is updated in place.
    """
    if len(batch) == 0:
        raise InsufficientData("empty batch")
    view = [None] * batch.observations.shape[1]
    view[agent_index] = learner
    nxt = {agent_index: _target_actions(learner, batch.next_observations[:, agent_index])}
    losses = _update_one(view, agent_index, batch, [agent_index], nxt, gamma, grad_clip)
    _soft_all([learner], tau)
    return losses


def maddpg_update(learners: Sequence[AgentLearner], batch: Batch, gamma: float, tau: float,
                  grad_clip: float | None = 0.5) -> list[tuple[float, float]]:
    """Centralised-critic update of every agent; targets are refreshed afterwards."""
    if len(batch) == 0:
        raise InsufficientData("empty batch")
    n = len(learners)
    if batch.observations.shape[1] != n:
        raise ShapeMismatch("batch agent count differs from the number of learners")
    slots = list(range(n))
    nxt = {k: _target_actions(learners[k], batch.next_observations[:, k]) for k in slots}
    losses = [_update_one(learners, i, batch, slots, nxt, gamma, grad_clip) for i in slots]
    _soft_all(learners, tau)
    return losses


# ---------------------------------------------------------------------------
# checkpoints

_NETS = ("actor", "critic", "target_actor", "target_critic")


def save_learners(directory, learners: Sequence[AgentLearner], manifest: dict) -> None:
    """Write ``agent_<i>/{actor,critic,target_*,*_opt}.bin`` and ``manifest.json``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for i, ln in enumerate(learners):
        d = root / f"agent_{i}"
        d.mkdir(exist_ok=True)
        for name in _NETS:
            save_mlp(d / f"{name}.bin", getattr(ln, name))
        save_adam(d / "actor_opt.bin", ln.actor_opt)
        save_adam(d / "critic_opt.bin", ln.critic_opt)
    info = dict(manifest, n_agents=len(learners),
                max_force=learners[0].max_force, communicate=learners[0].communicate)
    (root / "manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def load_learners(directory) -> tuple[list[AgentLearner], dict]:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    learners = []
    for i in range(manifest["n_agents"]):
        d = root / f"agent_{i}"
        nets = [load_mlp(d / f"{name}.bin") for name in _NETS]
        learners.append(AgentLearner(*nets, load_adam(d / "actor_opt.bin"),
                                     load_adam(d / "critic_opt.bin"),
                                     manifest["max_force"], manifest["communicate"]))
    if manifest.get("shared_params"):
        learners = [learners[0]] * len(learners)
    return learners, manifest
