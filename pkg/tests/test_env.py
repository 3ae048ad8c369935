import csv
import io

import numpy as np
import pytest

from conftest import make_world
from vipguard.config import WorldConfig
from vipguard.env import (clip_norm, integrate, observation_size, observe, observe_all, reset, step,
                          write_trajectory_csv)
from vipguard.errors import ActionCountMismatch, IndexOutOfRange, NonFiniteAction, SpawnFailure
from vipguard.rng import derive_stream
from vipguard.state import AgentAction, one_hot
from vipguard.threat import ThreatParams, instantaneous_threat


def silent(cfg, forces=None):
    forces = np.zeros((cfg.n_bodyguards, 2)) if forces is None else forces
    return [AgentAction.silent(f, cfg.comm_vocab) for f in forces]


def rollout_states(cfg, seed, policy=None):
    rng = derive_stream(seed, "test")
    w = reset(cfg, rng)
    states = [w]
    done = False
    while not done:
        acts = silent(cfg) if policy is None else policy(w)
        w, done = step(w, acts, cfg, rng)
        states.append(w)
    return states


def test_reset_is_deterministic(cfg):
    a = reset(cfg, derive_stream(9, "env"))
    b = reset(cfg, derive_stream(9, "env"))
    assert a.same_as(b)
    assert not a.same_as(reset(cfg, derive_stream(10, "env")))


def test_reset_without_bystanders_has_no_threat(cfg):
    w = reset(cfg.replace(n_bystanders=0), derive_stream(1, "env"))
    assert instantaneous_threat(w, ThreatParams.from_config(cfg)).instantaneous == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_reset_has_no_overlaps(cfg, seed):
    w = reset(cfg, derive_stream(seed, "env"))
    d = np.linalg.norm(w.positions[:, None] - w.positions[None], axis=2)
    gap = d - (w.radii[:, None] + w.radii[None])
    np.fill_diagonal(gap, 1.0)
    assert (gap > 0).all()


def test_reset_spawn_rules(cfg):
    for seed in range(20):
        w = reset(cfg, derive_stream(seed, "env"))
        guards = w.positions[w.bodyguard_slice]
        assert (np.linalg.norm(guards - w.positions[0], axis=1)
                <= cfg.bodyguard_spawn_factor * cfg.safe_distance).all()
        assert (np.abs(w.positions) <= cfg.world_halfwidth).all()
        assert w.step_index == 0
        assert (w.utterance_indices() == 0).all()
        assert np.array_equal(w.vip_goal, w.positions[w.landmark_slice][w.goal_index])


def test_overcrowded_arena_fails_to_spawn():
    cfg = WorldConfig(world_halfwidth=0.3, n_bystanders=100, safe_distance=0.5, band_distance=0.5)
    with pytest.raises(SpawnFailure):
        reset(cfg, derive_stream(0, "env"))


def test_integrate_single_entity_from_rest(cfg):
    # decimal oracle: v = f dt / m = 0.07, x = v dt = 0.007
    pos, vel = integrate(np.zeros((1, 2)), np.zeros((1, 2)), np.array([[0.7, 0.0]]), 1, cfg)
    assert vel[0] == pytest.approx([0.07, 0.0], abs=1e-15)
    assert pos[0] == pytest.approx([0.007, 0.0], abs=1e-15)


def test_integrate_applies_damping_and_speed_cap(cfg):
    _, vel = integrate(np.zeros((1, 2)), np.array([[0.8, 0.0]]), np.zeros((1, 2)), 1, cfg)
    assert vel[0, 0] == pytest.approx(0.6)
    _, vel = integrate(np.zeros((1, 2)), np.array([[1.0, 0.0]]), np.array([[50.0, 0.0]]), 1, cfg)
    assert np.linalg.norm(vel[0]) == pytest.approx(cfg.max_speed)


def test_zero_forces_at_rest_keep_positions():
    cfg = WorldConfig(n_bystanders=0, bystander_max_force=0.0, vip_max_force=0.0)
    w = reset(cfg, derive_stream(4, "env"))
    nxt, _ = step(w, silent(cfg), cfg, derive_stream(4, "step"))
    assert np.array_equal(nxt.positions, w.positions)


def test_done_on_last_step(cfg):
    states = rollout_states(cfg, 0)
    assert len(states) == cfg.episode_length + 1
    w = states[-2]
    assert w.step_index == cfg.episode_length - 1
    _, done = step(w, silent(cfg), cfg, derive_stream(0, "x"))
    assert done
    _, done = step(states[0], silent(cfg), cfg, derive_stream(0, "x"))
    assert not done


def test_step_rejects_wrong_action_count(cfg):
    w = reset(cfg, derive_stream(0, "env"))
    with pytest.raises(ActionCountMismatch):
        step(w, silent(cfg)[:1], cfg, derive_stream(0, "x"))


def test_step_rejects_nonfinite_force(cfg):
    w = reset(cfg, derive_stream(0, "env"))
    acts = silent(cfg, np.array([[np.nan, 0.0], [0.0, 0.0]]))
    with pytest.raises(NonFiniteAction):
        step(w, acts, cfg, derive_stream(0, "x"))


def test_trajectory_determinism(cfg):
    def policy(w):
        return silent(cfg, np.tile([0.5, -0.25], (cfg.n_bodyguards, 1)))
    a, b = rollout_states(cfg, 3, policy), rollout_states(cfg, 3, policy)
    assert all(x.same_as(y) for x, y in zip(a, b))


def test_boundedness_and_landmark_immobility():
    cfg = WorldConfig(max_force=5.0)
    rng = np.random.default_rng(0)
    for seed in range(10):
        states = rollout_states(cfg, seed, lambda w: silent(cfg, rng.uniform(-5, 5, (cfg.n_bodyguards, 2))))
        lm0 = states[0].positions[states[0].landmark_slice]
        for w in states:
            assert (np.abs(w.positions) <= cfg.world_halfwidth + w.radii[:, None] + 1e-12).all()
            assert (np.linalg.norm(w.velocities, axis=1) <= cfg.max_speed + 1e-12).all()
            assert np.array_equal(w.positions[w.landmark_slice], lm0)
            assert (w.velocities[w.landmark_slice] == 0).all()


def test_guard_force_is_clipped(cfg):
    w = reset(cfg.replace(n_bystanders=0), derive_stream(0, "env"))
    small = cfg.replace(n_bystanders=0)
    a, _ = step(w, silent(small, np.array([[100.0, 0], [0, 100.0]])), small, derive_stream(0, "x"))
    b, _ = step(w, silent(small, np.array([[1.0, 0], [0, 1.0]])), small, derive_stream(0, "x"))
    assert np.array_equal(a.positions, b.positions)


def test_collision_pushes_overlapping_discs_apart(cfg):
    w = make_world((0, 0), guards=[(0.06, 0.0)])
    c = cfg.replace(n_bodyguards=1, n_bystanders=0, n_landmarks=0, vip_max_force=0.0)
    rng = derive_stream(0, "x")
    nxt, _ = step(w, silent(c), c, rng)
    # the impulse acts on velocity; positions separate on the following step
    assert nxt.velocities[1, 0] > 0 > nxt.velocities[0, 0]
    assert nxt.velocities[0] == pytest.approx(-nxt.velocities[1])
    later, _ = step(nxt, silent(c), c, rng)
    assert later.positions[1, 0] - later.positions[0, 0] > 0.06


def test_utterances_are_delayed_by_one_step(cfg):
    w = reset(cfg, derive_stream(0, "env"))
    acts = [AgentAction(np.zeros(2), one_hot(3, cfg.comm_vocab)), AgentAction.silent(np.zeros(2), cfg.comm_vocab)]
    before = observe_all(w, cfg)[:, -2 * cfg.comm_vocab:]
    assert (before == np.tile(one_hot(0, cfg.comm_vocab), 2)).all()
    nxt, _ = step(w, acts, cfg, derive_stream(0, "x"))
    after = observe_all(nxt, cfg)[:, -2 * cfg.comm_vocab:]
    expected = np.concatenate([one_hot(3, cfg.comm_vocab), one_hot(0, cfg.comm_vocab)])
    assert (after == expected).all()


def test_observation_length_closed_form():
    cfg = WorldConfig(n_bodyguards=4, n_bystanders=10, n_landmarks=3, comm_vocab=10)
    # counted field by field in tests/oracles/derive.py
    assert observation_size(4, 10, 3, 10) == 106
    obs = observe_all(reset(cfg, derive_stream(0, "env")), cfg)
    assert obs.shape == (4, 106)


def test_observation_translation_invariance(cfg):
    w = reset(cfg, derive_stream(2, "env"))
    shifted = w.replace(positions=w.positions + np.array([0.3, -0.2]))
    a, b = observe_all(w, cfg), observe_all(shifted, cfg)
    own = observation_size(cfg.n_bodyguards, cfg.n_bystanders, cfg.n_landmarks, cfg.comm_vocab) \
        - cfg.n_bodyguards * cfg.comm_vocab - 4
    mask = np.ones(a.shape[1], dtype=bool)
    mask[own:own + 2] = False  # own absolute position is the only translated slot
    assert np.allclose(a[:, mask], b[:, mask], atol=1e-12)
    assert np.allclose(b[:, own:own + 2] - a[:, own:own + 2], [0.3, -0.2])


def test_observation_is_invertible_up_to_bystander_order(cfg):
    w = reset(cfg, derive_stream(6, "env"))
    obs = observe(w, 0, cfg)
    own = obs[-2 * cfg.comm_vocab - 4:-2 * cfg.comm_vocab - 2]
    vip = own + obs[0:2]
    assert np.allclose(vip, w.positions[0])
    mate = vip + obs[4:6]
    assert np.allclose(mate, w.positions[2])
    crowd = vip + obs[8:8 + 4 * cfg.n_bystanders].reshape(-1, 4)[:, :2]
    assert sorted(map(tuple, np.round(crowd, 12))) == sorted(map(tuple, np.round(w.positions[w.bystander_slice], 12)))


def test_observe_rejects_bad_index(cfg):
    w = reset(cfg, derive_stream(0, "env"))
    with pytest.raises(IndexOutOfRange):
        observe(w, 2, cfg)


def test_clip_norm_rows():
    out = clip_norm(np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]]), 1.0)
    assert out[0] == pytest.approx([0.6, 0.8])
    assert out[1] == pytest.approx([0.3, 0.4])
    assert (out[2] == 0).all()


def test_trajectory_csv_has_header_and_rows(cfg):
    states = rollout_states(cfg, 1)
    buf = io.StringIO()
    write_trajectory_csv(buf, states, ThreatParams.from_config(cfg))
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0][0] == "step_index" and rows[0][-1] == "threat"
    assert rows[0][1:6] == ["e0_kind", "e0_x", "e0_y", "e0_vx", "e0_vy"]
    assert len(rows) == len(states) + 1
    assert rows[1][1] == "vip"
    assert float(rows[1][-1]) == pytest.approx(
        instantaneous_threat(states[0], ThreatParams.from_config(cfg)).instantaneous, rel=1e-8)
