import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from fedjam import env
from fedjam.config import ConfigError, ExperimentConfig, JammerStrategy
from fedjam.env import GCS, NO_PARENT, ToolAction


def scalar_sinr_db(tx, rx, jam, tx_power, jammer_power, beta, noise, co_channel):
    """Closed-form reference, written with math only."""
    d = math.dist(tx, rx)
    d_jr = math.dist(jam, rx)
    interference = jammer_power * d_jr ** -beta if co_channel else 0.0
    return 10 * math.log10(tx_power * d ** -beta / (noise + interference))


def make_world(n=5, seed=0, **kw):
    return env.init_world(ExperimentConfig(n_uavs=n, **kw), seed)


def is_acyclic(parents):
    for start in range(len(parents)):
        seen = set()
        node = start
        while node >= 0:
            if node in seen:
                return False
            seen.add(node)
            node = int(parents[node])
    return True


# --- init_world ---------------------------------------------------------------

def test_init_leader_position():
    world = make_world(5)
    np.testing.assert_allclose(world.positions[0], [700.0, 500.0, 100.0], atol=1e-12)
    np.testing.assert_array_equal(world.gcs_position, [500.0, 500.0, 0.0])


def test_init_star_topology():
    world = make_world(5)
    assert world.leader == 0
    assert world.uav(0).parent == "Gcs"
    assert [world.uav(i).parent for i in range(1, 5)] == [0, 0, 0, 0]
    assert set(world.channels.tolist()) == {0}
    assert world.step == 0
    assert world.uav(0).role is env.Role.LEADER


def test_min_spacing_n10():
    chord = 2 * 200 * math.sin(math.pi / 10)
    assert chord == pytest.approx(123.6, abs=0.05)
    world = make_world(10)
    pos = world.positions
    dists = [math.dist(pos[i], pos[j]) for i in range(10) for j in range(i + 1, 10)]
    assert min(dists) == pytest.approx(chord, abs=1e-9)
    assert min(dists) >= world.config.safety_distance


def test_single_channel_rejected():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig(n_uavs=5, n_channels=1)
    assert err.value.field == "n_channels"


def test_formation_too_tight_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(n_uavs=30, safety_distance=50.0)


# --- kinematics ---------------------------------------------------------------

def test_full_revolution_returns_to_start():
    steps = 100
    speed = 200 * 2 * math.pi / steps
    world = make_world(5, cruise_speed=speed)
    start = world.positions.copy()
    for _ in range(steps):
        env.step_kinematics(world)
    np.testing.assert_allclose(world.positions, start, atol=1e-9)


def test_zero_speed_is_noop():
    world = make_world(5, cruise_speed=0.0)
    before = world.positions.copy()
    env.step_kinematics(world)
    np.testing.assert_array_equal(world.positions, before)


def test_angle_advance():
    world = make_world(5)
    before = world.angles.copy()
    env.step_kinematics(world)
    np.testing.assert_array_equal(world.angles, before + 0.05)
    np.testing.assert_allclose(world.angles - before, 0.05, atol=1e-15)


def test_rigid_rotation_preserves_distances():
    world = make_world(7)
    def pairwise(p):
        return np.linalg.norm(p[:, None] - p[None], axis=-1)
    ref = pairwise(world.positions)
    for _ in range(37):
        env.step_kinematics(world)
        np.testing.assert_allclose(pairwise(world.positions), ref, atol=1e-9)


# --- link_sinr ----------------------------------------------------------------

def test_sinr_off_channel_is_noise_limited():
    world = make_world(5)
    world.jammer.active_channel = 1
    tx, rx = world.gcs_position, world.positions[0]
    got = env.link_sinr(world, tx, rx, 0)
    d = math.dist(tx, rx)
    assert got == pytest.approx(10 * math.log10(1.0 * d ** -2 / 1e-9), abs=1e-9)


def test_sinr_tx_power_doubling():
    w1 = make_world(5)
    w2 = make_world(5, tx_power=2.0)
    w1.jammer.active_channel = w2.jammer.active_channel = 1
    a = env.link_sinr(w1, w1.gcs_position, w1.positions[2], 0)
    b = env.link_sinr(w2, w2.gcs_position, w2.positions[2], 0)
    assert b - a == pytest.approx(10 * math.log10(2), abs=1e-9)
    assert b - a == pytest.approx(3.0103, abs=1e-4)


def test_sinr_matches_scalar_oracle_co_channel():
    # jammer 300 m from the GCS receiver, on the link's channel
    world = make_world(5, jammer_position=(200.0, 500.0))
    leader, gcs = world.positions[0], world.gcs_position
    assert math.dist(world.jammer.position, gcs) == pytest.approx(300.0)
    got = env.link_sinr(world, leader, gcs, 0)
    want = scalar_sinr_db(tuple(leader), tuple(gcs), (200.0, 500.0, 0.0), 1.0, 10.0, 2.0, 1e-9, True)
    assert got == pytest.approx(want, abs=1e-9)
    assert got < world.config.sinr_threshold


def test_sinr_degenerate_geometry():
    world = make_world(5)
    with pytest.raises(env.GeometryError):
        env.link_sinr(world, world.positions[0], world.positions[0], 0)
    with pytest.raises(env.GeometryError):
        env.link_sinr(world, world.positions[0], world.jammer.position, 0)


# --- jammer -------------------------------------------------------------------

def test_reactive_leader_follows_after_lag():
    world = make_world(3, jammer_lag=3)
    seen = []
    hop_step = 2
    for t in range(8):
        env.jammer_step(world)
        seen.append(world.jammer.active_channel)
        actions = [ToolAction.FREQ_HOP if t == hop_step else ToolAction.HOLD] + [ToolAction.HOLD] * 2
        env.apply_actions(world, actions)
        world.step += 1
    # swarm moves to channel 1 during step 2; the jammer arrives at step 5
    assert seen == [0, 0, 0, 0, 0, 1, 1, 1]
    assert world.jammer.target_link == (GCS, world.leader)


def test_reactive_leader_channel_zero_before_buffer_fills():
    world = make_world(2, jammer_lag=4)
    world.channels[:] = 2
    for _ in range(3):
        env.jammer_step(world)
        assert world.jammer.active_channel == 0
    env.jammer_step(world)
    assert world.jammer.active_channel == 2


def test_sweep_cycles_channels():
    world = make_world(3, jammer_strategy=JammerStrategy.SWEEP, jammer_lag=1, n_channels=4)
    seen = []
    for _ in range(6):
        env.jammer_step(world)
        seen.append(world.jammer.active_channel)
        world.step += 1
    assert seen == [0, 1, 2, 3, 0, 1]


def test_random_jammer_is_seeded():
    def run(seed):
        world = make_world(3, seed=seed, jammer_strategy=JammerStrategy.RANDOM, n_channels=5)
        out = []
        for _ in range(40):
            env.jammer_step(world)
            out.append(world.jammer.active_channel)
        return out
    assert run(11) == run(11)
    assert run(11) != run(12)
    assert set(run(11)) <= set(range(5))


def test_lag_buffer_length_is_capped():
    world = make_world(3, jammer_lag=3)
    for t in range(10):
        env.jammer_step(world)
        assert len(world.jammer.lag_buffer) == min(t + 1, 3)
        world.step += 1


def test_huge_dwell_is_cheap():
    world = make_world(1, jammer_lag=10**12, jammer_strategy=JammerStrategy.SWEEP)
    for _ in range(5):
        env.jammer_step(world)
        assert world.jammer.active_channel == 0


# --- apply_actions ------------------------------------------------------------

def test_all_hold_is_noop():
    world = make_world(5)
    before = world.copy()
    _, costs = env.apply_actions(world, [ToolAction.HOLD] * 5)
    assert costs.sum() == 5 * world.config.cost_hold
    np.testing.assert_array_equal(world.parents, before.parents)
    np.testing.assert_array_equal(world.channels, before.channels)
    np.testing.assert_array_equal(world.roles, before.roles)


def test_freq_hop_coalesces_and_charges_each_requester():
    world = make_world(4, n_channels=4)
    world.channels[:] = 2
    world.gcs_channel = 2
    acts = [ToolAction.FREQ_HOP, ToolAction.HOLD, ToolAction.FREQ_HOP, ToolAction.HOLD]
    _, costs = env.apply_actions(world, acts)
    assert world.channels.tolist() == [3, 3, 3, 3]
    assert world.gcs_channel == 3
    assert costs.tolist() == [1.0, 0.0, 1.0, 0.0]


def test_freq_hop_wraps():
    world = make_world(2, n_channels=3)
    world.channels[:] = 2
    world.gcs_channel = 2
    env.apply_actions(world, [ToolAction.FREQ_HOP, ToolAction.HOLD])
    assert world.channels.tolist() == [0, 0] and world.gcs_channel == 0


def test_topology_reconfig_routes_around_dead_link():
    # comm_range 300 m: UAVs 2 and 3 sit 380 m from the leader but 235 m from a neighbour
    world = make_world(5, comm_range=300.0, jammer_power=0.0)
    assert not world.link_up[2] and not world.link_up[3]
    acts = [ToolAction.HOLD] * 5
    acts[2] = ToolAction.TOPOLOGY_RECONFIG
    _, costs = env.apply_actions(world, acts)
    assert world.parents.tolist() == [GCS, 0, 1, 4, 0]
    assert costs[2] == world.config.cost_topo
    env.update_connectivity(world)
    assert world.link_up.all()


def test_topology_reconfig_orphans_unreachable():
    world = make_world(5, comm_range=200.0, jammer_power=0.0)
    acts = [ToolAction.TOPOLOGY_RECONFIG] + [ToolAction.HOLD] * 4
    env.apply_actions(world, acts)
    assert world.parents[0] == GCS
    assert (world.parents[1:] == NO_PARENT).all()
    env.update_connectivity(world)
    assert world.uav(3).parent is None
    assert not world.link_up[1:].any()


def test_min_hop_tree_tie_breaks_lowest_id():
    feasible = np.zeros((4, 4), dtype=bool)
    feasible[0, 1] = feasible[0, 2] = True
    feasible[1, 3] = feasible[2, 3] = True
    parents = env.min_hop_tree(feasible, root=0)
    assert parents.tolist() == [GCS, 0, 0, 1]


def test_role_shuffle_picks_best_gcs_link():
    world = make_world(5)
    world.jammer.active_channel = 0  # co-channel: UAV farthest from the jammer wins
    pos = world.positions
    dj = np.linalg.norm(pos - world.jammer.position, axis=1)
    expected = int(np.argmax(dj))
    acts = [ToolAction.HOLD] * 5
    acts[3] = ToolAction.ROLE_SHUFFLE
    _, costs = env.apply_actions(world, acts)
    assert world.leader == expected
    assert world.parents[expected] == GCS
    assert world.parents[0] == expected
    assert costs[3] == world.config.cost_role
    assert int(world.roles.sum()) == 1


def test_role_shuffle_tie_goes_to_lowest_id():
    world = make_world(5)
    world.jammer.active_channel = 1  # no interference: every GCS link is equally good
    world.roles[:] = 0
    world.roles[3] = 1
    world.parents[:] = 3
    world.parents[3] = GCS
    env.apply_actions(world, [ToolAction.ROLE_SHUFFLE] + [ToolAction.HOLD] * 4)
    assert world.leader == 0
    assert world.parents[3] == 0


# --- observe ------------------------------------------------------------------

def test_observe_leader_encoding():
    world = make_world(5, jammer_power=0.0)
    obs = env.observe(world, 0)
    k = world.config.n_channels
    assert obs.shape == (12 + k,)
    assert obs[0] == 1.0
    assert obs[5:5 + k].tolist() == [1.0, 0.0, 0.0, 0.0]
    assert obs[5 + k] == 1.0
    assert obs[8 + k:].tolist() == [1.0, 0.0, 0.0, 0.0]


def test_observe_persistence_clamps():
    world = make_world(5)
    world.consec_jammed[2] = 2 * world.config.persist_threshold
    assert env.observe(world, 2)[6 + world.config.n_channels] == 1.0


def test_observe_sinr_midpoint():
    world = make_world(5)
    world.link_sinr[1] = 0.0
    assert env.observe(world, 1)[7 + world.config.n_channels] == 0.5


def test_observe_orphan_zeroes_link_entries():
    world = make_world(5, comm_range=200.0, jammer_power=0.0)
    env.apply_actions(world, [ToolAction.TOPOLOGY_RECONFIG] + [ToolAction.HOLD] * 4)
    env.update_connectivity(world)
    obs = env.observe(world, 2)
    k = world.config.n_channels
    assert obs[5 + k] == 0.0 and obs[7 + k] == 0.0


def test_observe_unknown_agent():
    world = make_world(3)
    with pytest.raises(env.UnknownAgentError):
        env.observe(world, 3)


@given(st.integers(1, 12), st.integers(2, 6), st.integers(0, 60))
@settings(max_examples=40, deadline=None)
def test_observation_ranges(n, k, steps):
    world = make_world(n, n_channels=k)
    rng = np.random.default_rng(steps)
    for _ in range(steps):
        env.step_kinematics(world)
        env.jammer_step(world)
        env.apply_actions(world, rng.integers(0, 4, n))
        env.update_connectivity(world)
    obs = env.observe_all(world)
    assert obs.shape == (n, 12 + k)
    trig = obs[:, 3:5]
    rest = np.delete(obs, [3, 4], axis=1)
    assert ((rest >= 0) & (rest <= 1)).all()
    assert ((trig >= -1) & (trig <= 1)).all()


# --- reward -------------------------------------------------------------------

def outcome(links_down, cost, agree):
    return env.StepOutcome(links_down, links_down >= 1, np.array([cost]), np.array([agree]))


def test_reward_bonus_only():
    assert env.compute_reward(outcome(0, 0.0, True), 0, 0.5) == 0.5


def test_reward_alpha_zero_ignores_agreement():
    a = env.compute_reward(outcome(1, 2.0, True), 0, 0.0)
    b = env.compute_reward(outcome(1, 2.0, False), 0, 0.0)
    assert a == b == -1.0 * 1 - 0.1 * 2.0


def test_reward_plug_in():
    assert env.compute_reward(outcome(2, 1.0, False), 0, 0.7, w1=1.0, w2=0.1) == pytest.approx(-2.1)


def test_vector_reward_matches_scalar():
    oc = env.StepOutcome(3, True, np.array([0.0, 1.0, 2.0, 3.0]), np.array([True, False, True, False]))
    vec = env.compute_rewards(oc, 0.37, 1.0, 0.1)
    assert vec.tolist() == [env.compute_reward(oc, i, 0.37, 1.0, 0.1) for i in range(4)]


# --- connectivity -------------------------------------------------------------

def test_no_jammer_power_all_links_up():
    world = make_world(5, jammer_power=0.0)
    env.jammer_step(world)
    _, oc = env.update_connectivity(world)
    assert world.link_up.all()
    assert oc.links_down == 0 and not oc.attack_success


def test_adjacent_jammer_takes_link_down():
    # jammer on the ground right under the leader's position
    world = make_world(5, jammer_position=(700.0, 500.0))
    leader, gcs = world.positions[0], world.gcs_position
    oracle = scalar_sinr_db(tuple(gcs), tuple(leader), (700.0, 500.0, 0.0), 1.0, 10.0, 2.0, 1e-9, True)
    assert oracle < world.config.sinr_threshold
    env.jammer_step(world)
    _, oc = env.update_connectivity(world)
    assert not world.link_up[0]
    assert world.link_sinr[0] == pytest.approx(oracle, abs=1e-9)
    assert oc.links_down >= 1 and oc.attack_success
    assert world.consec_jammed[0] == 1


def test_off_channel_down_link_not_counted():
    world = make_world(5, comm_range=300.0, jammer_power=0.0)
    world.channels[:] = 1
    world.gcs_channel = 1
    world.jammer.active_channel = 0
    _, oc = env.update_connectivity(world)
    assert not world.link_up[2]
    assert oc.links_down == 0
    assert world.consec_jammed[2] == 0


def test_consec_jammed_resets_when_link_returns():
    world = make_world(3)
    for _ in range(3):
        env.jammer_step(world)
        env.update_connectivity(world)
    assert (world.consec_jammed == 3).all()
    env.apply_actions(world, [ToolAction.FREQ_HOP, 0, 0])
    env.update_connectivity(world)
    assert (world.consec_jammed == 0).all()


# --- whole-episode invariants --------------------------------------------------

@given(st.sampled_from([1, 2, 5, 10]), st.integers(0, 2**32 - 1),
       st.sampled_from(list(JammerStrategy)))
@settings(max_examples=25, deadline=None)
def test_random_play_invariants(n, seed, strategy):
    cfg = ExperimentConfig(n_uavs=n, jammer_strategy=strategy, episode_len=40, comm_range=450.0)
    world = env.init_world(cfg, seed)
    rng = np.random.default_rng(seed)

    def pairwise(p):
        return np.linalg.norm(p[:, None] - p[None], axis=-1)
    ref = pairwise(world.positions)
    for _ in range(cfg.episode_len):
        env.step_kinematics(world)
        np.testing.assert_allclose(pairwise(world.positions), ref, atol=1e-9)
        env.jammer_step(world)
        assert 0 <= world.jammer.active_channel < cfg.n_channels
        env.apply_actions(world, rng.integers(0, 4, n))
        _, oc = env.update_connectivity(world)
        assert int(world.roles.sum()) == 1
        assert world.parents[world.leader] == GCS
        assert (world.parents == GCS).sum() == 1
        assert is_acyclic(world.parents)
        assert oc.attack_success == (oc.links_down >= 1)
        assert 0 <= oc.links_down <= n
        assert (world.consec_jammed[world.link_up] == 0).all()


def test_determinism_same_seed_same_trajectory():
    def trace(seed):
        cfg = ExperimentConfig(n_uavs=5, jammer_strategy=JammerStrategy.RANDOM)
        world = env.init_world(cfg, seed)
        rng = np.random.default_rng(0)
        out = []
        for _ in range(30):
            env.step_kinematics(world)
            env.jammer_step(world)
            env.apply_actions(world, rng.integers(0, 4, 5))
            env.update_connectivity(world)
            out.append(env.snapshot(world))
        return out
    assert trace(5) == trace(5)


def test_snapshot_field_order():
    text = env.snapshot(make_world(2))
    lines = text.splitlines()
    assert lines[0] == "step 0"
    assert lines[1].startswith("gcs_channel ")
    assert lines[2].startswith("jammer ReactiveLeader")
    assert lines[3].startswith("uav 0 role=Leader")
    assert len(lines) == 5


def test_topology_records():
    world = make_world(3, jammer_power=0.0)
    topo = world.topology()
    assert topo.parent_map == (GCS, 0, 0)
    assert [r.receiver for r in topo.link_records] == [0, 1, 2]
    assert all(r.up for r in topo.link_records)
