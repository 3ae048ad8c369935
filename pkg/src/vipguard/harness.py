"""Training runs, greedy evaluation, sweeps and CSV reports.

Randomness of a run is split into labelled streams derived from the run seed:
``init`` (network weights), ``train/env``, ``train/explore``, ``train/replay``
and ``eval/<k>`` for the k-th evaluation episode. Evaluation streams never
overlap the training ones, and every evaluation round replays the same
``eval/<k>`` episodes so learning curves compare like with like.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import LearnerKind, RewardKind, WorldConfig, validate_config
from .env import observation_size, observe_all, reset, step
from .errors import NonFiniteLoss
from .learner import (AgentLearner, ReplayBuffer, Transition, ddpg_update, maddpg_update,
                      save_learners, select_action)
from .rewards import team_rewards
from .rng import derive_stream
from .threat import ThreatParams, instantaneous_threat

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalRecord:
    n_bodyguards: int
    reward_kind: str
    learner_kind: str
    communication: bool
    seed: int
    phase: str            # "train" (exploratory episode) or "eval" (greedy)
    episode_index: int    # training episodes completed when recorded
    rollout: int          # index of the evaluation episode (0 for training records)
    total_threat: float
    mean_reward: float    # episode return averaged over bodyguards
    utterance_rate: float

    @property
    def combination(self) -> tuple:
        return (self.n_bodyguards, self.reward_kind, self.learner_kind, self.communication)


RECORD_FIELDS = [f.name for f in fields(EvalRecord)]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def write_records(path, records: Iterable[EvalRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, name)) for name in RECORD_FIELDS])


def read_records(path) -> list[EvalRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalRecord(
                int(row["n_bodyguards"]), row["reward_kind"], row["learner_kind"],
                row["communication"] == "1", int(row["seed"]), row["phase"],
                int(row["episode_index"]), int(row["rollout"]), float(row["total_threat"]),
                float(row["mean_reward"]), float(row["utterance_rate"]),
            ))
    return out


# ---------------------------------------------------------------------------
# learners and rollouts


def build_learners(cfg: WorldConfig, seed: int) -> list[AgentLearner]:
    obs_dim = observation_size(cfg.n_bodyguards, cfg.n_bystanders, cfg.n_landmarks, cfg.comm_vocab)
    act_dim = 2 + cfg.comm_vocab
    central = LearnerKind(cfg.learner_kind) is LearnerKind.MADDPG
    critic_act = act_dim * (cfg.n_bodyguards if central else 1)
    init = derive_stream(seed, "init")
    count = 1 if cfg.shared_params else cfg.n_bodyguards
    made = [
        AgentLearner.create(obs_dim, cfg.comm_vocab, critic_act, cfg.hidden_sizes, cfg.actor_lr,
                            cfg.critic_lr, init, cfg.max_force, cfg.communication_enabled)
        for _ in range(count)
    ]
    return made * cfg.n_bodyguards if cfg.shared_params else made


@dataclass
class Episode:
    total_threat: float
    returns: np.ndarray
    utterance_rate: float
    transitions: list[Transition] = field(default_factory=list)


def rollout(learners: Sequence[AgentLearner], cfg: WorldConfig, env_rng, explore_rng=None,
            on_step=None) -> Episode:
    """Play one episode. Greedy when ``explore_rng`` is None.

    ``on_step(transition)`` is called after every step (used to feed the
    replay buffer and trigger updates while the episode runs).
    """
    params = ThreatParams.from_config(cfg)
    world = reset(cfg, env_rng)
    obs = observe_all(world, cfg)
    threat = 0.0
    returns = np.zeros(cfg.n_bodyguards)
    spoken = 0
    sigma = cfg.exploration_sigma if explore_rng is not None else 0.0
    eps = cfg.utterance_epsilon if explore_rng is not None else 0.0
    done = False
    while not done:
        threat += instantaneous_threat(world, params).instantaneous
        actions = [select_action(ln, o, sigma, explore_rng, eps) for ln, o in zip(learners, obs)]
        nxt, done = step(world, actions, cfg, env_rng)
        rewards = team_rewards(nxt, actions, cfg)
        nobs = observe_all(nxt, cfg)
        returns += rewards
        spoken += sum(a.speaks for a in actions)
        if on_step is not None:
            on_step(Transition(obs, np.array([a.as_vector() for a in actions]), rewards, nobs, done))
        world, obs = nxt, nobs
    return Episode(threat * cfg.dt, returns, spoken / (cfg.episode_length * cfg.n_bodyguards))


def _identity(cfg: WorldConfig, seed: int) -> dict:
    return dict(
        n_bodyguards=cfg.n_bodyguards,
        reward_kind=RewardKind(cfg.reward_kind).value,
        learner_kind=LearnerKind(cfg.learner_kind).value,
        communication=cfg.communication_enabled,
        seed=seed,
    )


def evaluate(learners: Sequence[AgentLearner], cfg: WorldConfig, episodes: int, seed: int,
             episode_index: int = 0) -> list[EvalRecord]:
    """Greedy rollouts on the fixed evaluation episodes ``eval/0 .. eval/<episodes-1>``."""
    ident = _identity(cfg, seed)
    out = []
    for k in range(episodes):
        ep = rollout(learners, cfg, derive_stream(seed, f"eval/{k}"))
        out.append(EvalRecord(**ident, phase="eval", episode_index=episode_index, rollout=k,
                              total_threat=ep.total_threat, mean_reward=float(ep.returns.mean()),
                              utterance_rate=ep.utterance_rate))
    return out


def threat_stats(records: Sequence[EvalRecord]) -> tuple[float, float]:
    """Mean and population standard deviation of ``total_threat``."""
    values = np.array([r.total_threat for r in records])
    return float(values.mean()), float(values.std())


@dataclass
class TrainingResult:
    learners: list[AgentLearner]
    records: list[EvalRecord]
    cfg: WorldConfig
    seed: int

    def evals(self, episode_index: int | None = None) -> list[EvalRecord]:
        ev = [r for r in self.records if r.phase == "eval"]
        if episode_index is None:
            episode_index = max(r.episode_index for r in ev)
        return [r for r in ev if r.episode_index == episode_index]

    @property
    def baseline(self) -> float:
        return threat_stats(self.evals(0))[0]

    @property
    def final(self) -> float:
        return threat_stats(self.evals())[0]


def run_training(cfg: WorldConfig, seed: int | None = None, out_dir=None) -> TrainingResult:
    """Train one configuration on one seed.

    The untrained policy is evaluated first (``episode_index == 0``), then
    every ``eval_interval`` episodes and after the last episode. With
    ``out_dir`` set, checkpoints go to ``out_dir/checkpoint`` every
    ``checkpoint_interval`` episodes and at the end, and the log to
    ``out_dir/records.csv``.
    """
    validate_config(cfg)
    seed = cfg.seed if seed is None else seed
    cfg = cfg.replace(seed=seed)
    learners = build_learners(cfg, seed)
    obs_dim = learners[0].obs_dim
    buf = ReplayBuffer(cfg.replay_capacity, cfg.n_bodyguards, obs_dim, 2 + cfg.comm_vocab)
    env_rng = derive_stream(seed, "train/env")
    explore_rng = derive_stream(seed, "train/explore")
    replay_rng = derive_stream(seed, "train/replay")
    central = LearnerKind(cfg.learner_kind) is LearnerKind.MADDPG
    ident = _identity(cfg, seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json())

    records = evaluate(learners, cfg, cfg.eval_episodes, seed, 0)
    steps = 0

    def learn(t: Transition) -> None:
        nonlocal steps
        buf.push(t)
        steps += 1
        if len(buf) < cfg.warmup or steps % cfg.update_every:
            return
        batch = buf.sample(cfg.batch_size, replay_rng)
        if central:
            maddpg_update(learners, batch, cfg.gamma, cfg.tau, cfg.grad_clip)
        else:
            for i, ln in enumerate(learners):
                ddpg_update(ln, batch, i, cfg.gamma, cfg.tau, cfg.grad_clip)

    def checkpoint(episode: int) -> None:
        if out is not None:
            save_learners(out / "checkpoint", learners,
                          {"config": cfg.to_dict(), "config_hash": cfg.digest(), "episodes": episode,
                           "seed": seed, "shared_params": cfg.shared_params})

    for ep in range(1, cfg.train_episodes + 1):
        try:
            episode = rollout(learners, cfg, env_rng, explore_rng, learn)
        except NonFiniteLoss as exc:
            exc.episode = ep
            log.error("non-finite loss in episode %d", ep)
            raise
        records.append(EvalRecord(**ident, phase="train", episode_index=ep, rollout=0,
                                  total_threat=episode.total_threat,
                                  mean_reward=float(episode.returns.mean()),
                                  utterance_rate=episode.utterance_rate))
        if ep % cfg.eval_interval == 0 or ep == cfg.train_episodes:
            records += evaluate(learners, cfg, cfg.eval_episodes, seed, ep)
            log.info("seed %d episode %d: eval threat %.4f", seed, ep, threat_stats(records[-cfg.eval_episodes:])[0])
        if ep % cfg.checkpoint_interval == 0:
            checkpoint(ep)

    checkpoint(cfg.train_episodes)
    if out is not None:
        write_records(out / "records.csv", records)
    return TrainingResult(learners, records, cfg, seed)


# ---------------------------------------------------------------------------
# reports


def final_evals(records: Sequence[EvalRecord]) -> dict[tuple, list[EvalRecord]]:
    """Greedy records of the last evaluation round, grouped by (combination, seed)."""
    last: dict[tuple, int] = {}
    for r in records:
        if r.phase == "eval":
            key = r.combination + (r.seed,)
            last[key] = max(last.get(key, -1), r.episode_index)
    groups: dict[tuple, list[EvalRecord]] = {}
    for r in records:
        key = r.combination + (r.seed,)
        if r.phase == "eval" and r.episode_index == last[key]:
            groups.setdefault(key, []).append(r)
    return groups


def summarize(records: Sequence[EvalRecord]) -> list[dict]:
    """One row per axis combination: mean and std over seeds of each seed's final threat."""
    per_seed = final_evals(records)
    baseline: dict[tuple, list[float]] = {}
    for r in records:
        if r.phase == "eval" and r.episode_index == 0:
            baseline.setdefault(r.combination + (r.seed,), []).append(r.total_threat)
    combos: dict[tuple, list[tuple[int, float]]] = {}
    for key, recs in per_seed.items():
        combos.setdefault(key[:4], []).append((key[4], float(np.mean([r.total_threat for r in recs]))))
    rows = []
    for combo in sorted(combos, key=lambda c: (c[0], c[1], c[2], not c[3])):
        seeds = sorted(combos[combo])
        values = np.array([v for _, v in seeds])
        base = [float(np.mean(baseline[combo + (s,)])) for s, _ in seeds if combo + (s,) in baseline]
        rows.append(dict(
            n_bodyguards=combo[0], reward_kind=combo[1], learner_kind=combo[2], communication=combo[3],
            n_seeds=len(values), mean_total_threat=float(values.mean()),
            std_total_threat=float(values.std()),
            baseline_mean=float(np.mean(base)) if base else math.nan,
            seeds=" ".join(str(s) for s, _ in seeds),
        ))
    return rows


def curves(records: Sequence[EvalRecord]) -> list[dict]:
    """Greedy threat versus training episode, averaged over seeds and rollouts."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        if r.phase == "eval":
            groups.setdefault(r.combination + (r.episode_index,), []).append(r.total_threat)
    rows = []
    for key in sorted(groups, key=lambda k: (k[1], k[0], k[2], not k[3], k[4])):
        v = np.array(groups[key])
        rows.append(dict(n_bodyguards=key[0], reward_kind=key[1], learner_kind=key[2],
                         communication=key[3], episode_index=key[4],
                         mean_total_threat=float(v.mean()), std_total_threat=float(v.std()),
                         n=len(v)))
    return rows


def reward_ordering(summary: Sequence[dict]) -> list[dict]:
    """Compare communication-penalty against threat-only where both were run."""
    out = []
    by = {(r["n_bodyguards"], r["learner_kind"], r["communication"], r["reward_kind"]): r for r in summary}
    for (n, lk, comm, kind), row in sorted(by.items(), key=lambda kv: (kv[0][0], kv[0][1], not kv[0][2])):
        if kind != RewardKind.COMM_PENALTY.value:
            continue
        other = by.get((n, lk, comm, RewardKind.THREAT_ONLY.value))
        if other is None:
            continue
        out.append(dict(n_bodyguards=n, learner_kind=lk, communication=comm,
                        comm_penalty=row["mean_total_threat"], threat_only=other["mean_total_threat"],
                        ordering_held=row["mean_total_threat"] <= other["mean_total_threat"]))
    return out


def _write_rows(path: Path, rows: Sequence[dict], header: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


SUMMARY_FIELDS = ["n_bodyguards", "reward_kind", "learner_kind", "communication", "n_seeds",
                  "mean_total_threat", "std_total_threat", "baseline_mean", "seeds"]
CURVE_FIELDS = ["n_bodyguards", "reward_kind", "learner_kind", "communication", "episode_index",
                "mean_total_threat", "std_total_threat", "n"]
ORDER_FIELDS = ["n_bodyguards", "learner_kind", "communication", "comm_penalty", "threat_only",
                "ordering_held"]


def emit_report(records: Sequence[EvalRecord], out_dir) -> dict[str, Path]:
    """Write ``records.csv``, ``summary.csv``, ``curves.csv`` and, when both
    reward kinds are present, ``reward_ordering.csv``.

    Values are rounded to 9 significant digits first so that every summary
    number can be recomputed exactly from ``records.csv``.
    """
    if not records:
        raise ValueError("no records to report")
    for r in records:
        if not all(math.isfinite(v) for v in (r.total_threat, r.mean_reward, r.utterance_rate)):
            raise ValueError(f"non-finite value in record {r}")
    records = [_rounded(r) for r in records]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"records": out / "records.csv", "summary": out / "summary.csv", "curves": out / "curves.csv"}
    write_records(paths["records"], records)
    summary = summarize(records)
    _write_rows(paths["summary"], summary, SUMMARY_FIELDS)
    _write_rows(paths["curves"], curves(records), CURVE_FIELDS)
    ordering = reward_ordering(summary)
    if ordering:
        paths["reward_ordering"] = out / "reward_ordering.csv"
        _write_rows(paths["reward_ordering"], ordering, ORDER_FIELDS)
    return paths


def _rounded(r: EvalRecord) -> EvalRecord:
    def q(x):
        return float(f"{x:.9g}")
    return EvalRecord(**{**asdict(r), "total_threat": q(r.total_threat),
                         "mean_reward": q(r.mean_reward), "utterance_rate": q(r.utterance_rate)})


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ExperimentSpec:
    base: WorldConfig
    n_bodyguards: list[int]
    reward_kinds: list[RewardKind]
    learner_kinds: list[LearnerKind]
    communication: list[bool]
    seeds: list[int]
    output_dir: Path

    def __post_init__(self):
        for name in ("n_bodyguards", "reward_kinds", "learner_kinds", "communication", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("sweep seeds must be distinct")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentSpec":
        base = data.get("base", {})
        if isinstance(base, str):
            base = json.loads(((base_dir or Path(".")) / base).read_text())
        cfg = WorldConfig.from_dict(base)
        axes = data.get("axes", {})
        return cls(
            base=cfg,
            n_bodyguards=list(axes.get("n_bodyguards", [cfg.n_bodyguards])),
            reward_kinds=[RewardKind(k) for k in axes.get("reward_kind", [cfg.reward_kind.value])],
            learner_kinds=[LearnerKind(k) for k in axes.get("learner_kind", [cfg.learner_kind.value])],
            communication=list(axes.get("communication", [cfg.communication_enabled])),
            seeds=list(data.get("seeds", [0, 1, 2, 3, 4])),
            output_dir=Path(data.get("output_dir", "runs")),
        )

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)

    def points(self) -> list[tuple[WorldConfig, int, Path]]:
        out = []
        for n, rk, lk, comm in itertools.product(self.n_bodyguards, self.reward_kinds,
                                                 self.learner_kinds, self.communication):
            cfg = validate_config(self.base.replace(
                n_bodyguards=n, reward_kind=rk, learner_kind=lk, communication_enabled=comm))
            name = f"n{n}_{rk.value}_{lk.value}_comm{'on' if comm else 'off'}"
            for s in self.seeds:
                out.append((cfg, s, self.output_dir / name / f"seed{s}"))
        return out


def _run_point(args) -> list[EvalRecord]:
    cfg, seed, out = args
    return run_training(cfg, seed, out).records


def run_sweep(spec: ExperimentSpec, jobs: int = 1) -> list[EvalRecord]:
    """Train every axis combination on every seed and write the report.

    ``jobs > 1`` runs points in worker processes; each point is still
    deterministic because it owns all of its streams.
    """
    points = spec.points()
    if jobs <= 1:
        results = [_run_point(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, points))
    records = [r for chunk in results for r in chunk]
    emit_report(records, spec.output_dir / "report")
    return records
