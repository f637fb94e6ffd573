"""Centralized baseline: one REINFORCE policy over the joint observation and joint action."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import env
from .config import ExperimentConfig
from .frl import _draw, _stack, alpha_schedule, hyper_from_config, stacked_forward
from .metrics import EpisodeMetrics
from .policy import PolicyParams, Trajectory, TrainingDivergence, init_params, reinforce_update
from .reasoner import suggest_all
from .seeding import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointFeasibility:
    ok: bool
    n_uavs: int
    joint_actions: int
    max_joint_actions: int

    def report(self) -> str:
        verdict = "ok" if self.ok else "infeasible"
        return (f"joint action space for n_uavs={self.n_uavs}: 4^{self.n_uavs} = {self.joint_actions} "
                f"(limit {self.max_joint_actions}): {verdict}")


class JointSpaceInfeasible(ValueError):
    def __init__(self, feasibility: JointFeasibility):
        super().__init__(feasibility.report())
        self.feasibility = feasibility


def check_joint_feasible(n_uavs: int, max_joint_actions: int = 65536) -> JointFeasibility:
    size = 4 ** n_uavs
    return JointFeasibility(size <= max_joint_actions, n_uavs, size, max_joint_actions)


def encode_joint(actions) -> int:
    """Base-4 index with agent 0 as the least significant digit."""
    index = 0
    for a in reversed(list(actions)):
        a = int(a)
        if not 0 <= a < env.N_ACTIONS:
            raise ValueError(f"action {a} outside 0..3")
        index = index * 4 + a
    return index


def decode_joint(index: int, n_uavs: int) -> tuple[env.ToolAction, ...]:
    if not 0 <= index < 4 ** n_uavs:
        raise ValueError(f"joint index {index} outside [0, 4^{n_uavs})")
    out = []
    for _ in range(n_uavs):
        index, digit = divmod(index, 4)
        out.append(env.ToolAction(digit))
    return tuple(out)


def joint_observe(world: env.WorldState) -> np.ndarray:
    return env.observe_all(world).ravel()


def run_joint_episode(config: ExperimentConfig, params: PolicyParams, alpha: float, *,
                      seed: int, episode: int, greedy: bool = False,
                      evaluation: bool = False) -> tuple[Trajectory, EpisodeMetrics]:
    """Play one episode under the central policy.

    Per-step central reward: -w1*links_down - w2*sum(costs) + alpha*sum(agree).
    Sampling uses the agent-0 action stream, so N=1 reproduces FRL exactly.
    """
    n, T = config.n_uavs, config.episode_len
    joint = 4 ** n
    if params.shape != (n * config.obs_dim, params.hidden_dim, joint):
        raise ValueError(f"joint policy shape {params.shape} does not fit n_uavs={n}")
    jam_purpose, act_purpose = ("eval-jammer", "eval-act") if evaluation else ("jammer", "act")
    world = env.init_world(config, seed, episode, jammer_purpose=jam_purpose)
    rngs = [stream(seed, act_purpose, episode, 0)]
    stack = _stack([params])
    place = 4 ** np.arange(n)

    obs_log = np.empty((T, n * config.obs_dim))
    idx_log = np.empty(T, dtype=np.int64)
    rew_log = np.empty(T)
    agree_log = np.empty((T, n), dtype=bool)
    sugg_log = np.empty(T, dtype=np.int64)
    cost_total = 0.0
    attacks = 0
    for t in range(T):
        env.step_kinematics(world)
        env.jammer_step(world)
        obs = env.observe_all(world).reshape(1, -1)
        suggested = suggest_all(world.roles, world.link_up, world.consec_jammed, config.persist_threshold)
        index = int(_draw(stacked_forward(stack, obs), rngs, greedy)[0])
        actions = (index // place) % 4
        _, costs = env.apply_actions(world, actions)
        _, outcome = env.update_connectivity(world)
        agree = actions == suggested
        rew_log[t] = -config.w1 * outcome.links_down - config.w2 * float(costs.sum())
        if alpha:
            rew_log[t] += alpha * float(agree.sum())
        obs_log[t] = obs[0]
        idx_log[t] = index
        agree_log[t] = agree
        sugg_log[t] = int(suggested @ place)
        cost_total += float(costs.sum())
        attacks += outcome.attack_success

    traj = Trajectory(obs_log, idx_log, rew_log, sugg_log)
    metrics = EpisodeMetrics(
        episode=episode,
        attack_success_rate=attacks / T,
        defense_cost=cost_total,
        mean_reward=float(rew_log.mean()),
        agreement_rate=float(agree_log.mean()),
    )
    return traj, metrics


def train_crl(config: ExperimentConfig, total_episodes: int) -> tuple[PolicyParams, list[EpisodeMetrics]]:
    feas = check_joint_feasible(config.n_uavs, config.max_joint_actions)
    if not feas.ok:
        raise JointSpaceInfeasible(feas)
    n = config.n_uavs
    seed = config.master_seed
    hyper = hyper_from_config(config)
    params = init_params(n * config.obs_dim, config.hidden_dim, stream(seed, "init", 0, 0),
                         out_dim=feas.joint_actions)
    baseline = None
    history = []
    for ep in range(total_episodes):
        alpha = alpha_schedule(config.alpha0, config.alpha_decay, ep)
        traj, metrics = run_joint_episode(config, params, alpha, seed=seed, episode=ep)
        history.append(metrics)
        try:
            params, baseline = reinforce_update(params, traj, hyper, baseline)
        except TrainingDivergence as exc:
            raise TrainingDivergence(f"episode {ep}: {exc}") from exc
        if (ep + 1) % 100 == 0:
            log.debug("crl n=%d episode %d asr=%.3f cost=%.1f", n, ep + 1,
                      metrics.attack_success_rate, metrics.defense_cost)
    return params, history
