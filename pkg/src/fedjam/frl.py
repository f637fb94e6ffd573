"""Federated REINFORCE: local episodes and updates per UAV, periodic FedAvg at the GCS."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import env
from .config import ExperimentConfig
from .metrics import EpisodeMetrics
from .policy import (DimensionError, PolicyParams, TrainHyper, Trajectory, TrainingDivergence,
                     init_params, reinforce_update, softmax)
from .reasoner import suggest_all
from .seeding import stream

log = logging.getLogger(__name__)

_FIXED_SHIFT = 1074  # every finite double times 2**1074 is an integer


class ShapeMismatch(DimensionError):
    pass


@dataclass(frozen=True)
class FederationRoundLog:
    round: int
    pre_checksums: tuple[str, ...]
    post_checksum: str
    episodes: int
    alpha: float


def alpha_schedule(alpha0: float, alpha_decay: float, episode_index: int) -> float:
    if episode_index < 0:
        raise ValueError("episode_index must be >= 0")
    return alpha0 * alpha_decay ** episode_index


def _to_fixed(values: np.ndarray) -> list[int]:
    out = []
    for v in values.tolist():
        num, den = v.as_integer_ratio()
        out.append(num << (_FIXED_SHIFT - den.bit_length() + 1))
    return out


def fedavg(params_list: Sequence[PolicyParams]) -> PolicyParams:
    """Element-wise mean of the agents' flat parameter vectors.

    Sums are accumulated in agent-id order over exact fixed-point integers and
    rounded once, so the result is the correctly rounded mean: identical
    inputs come back unchanged and input order cannot matter.
    """
    if not params_list:
        raise ValueError("fedavg needs at least one parameter set")
    shape = params_list[0].shape
    for i, p in enumerate(params_list):
        if p.shape != shape:
            raise ShapeMismatch(f"agent {i} has shape {p.shape}, expected {shape}")
    n = len(params_list)
    flats = [p.flatten() for p in params_list]
    if not all(np.all(np.isfinite(f)) for f in flats):
        raise TrainingDivergence("non-finite parameters submitted for aggregation")
    totals = _to_fixed(flats[0])
    for f in flats[1:]:
        totals = [a + b for a, b in zip(totals, _to_fixed(f))]
    denom = n << _FIXED_SHIFT
    mean = np.array([t / denom for t in totals], dtype=np.float64)
    return params_list[0].with_flat(mean)


def _stack(policies: Sequence[PolicyParams]):
    return (np.stack([p.W1 for p in policies]), np.stack([p.b1 for p in policies]),
            np.stack([p.W2 for p in policies]), np.stack([p.b2 for p in policies]))


def stacked_forward(stack, obs: np.ndarray) -> np.ndarray:
    """Per-agent probabilities: row i of obs goes through policy i."""
    W1, b1, W2, b2 = stack
    hidden = np.tanh(np.einsum("nhd,nd->nh", W1, obs) + b1)
    return softmax(np.einsum("nkh,nh->nk", W2, hidden) + b2)


def _draw(probs: np.ndarray, rngs: Sequence[np.random.Generator], greedy: bool) -> np.ndarray:
    if greedy:
        return np.argmax(probs, axis=1)
    cdf = np.cumsum(probs, axis=1)
    out = np.empty(len(rngs), dtype=np.int64)
    for i, rng in enumerate(rngs):
        out[i] = min(int(np.searchsorted(cdf[i], rng.random(), side="right")), probs.shape[1] - 1)
    return out


def run_episode(config: ExperimentConfig, policies: Sequence[PolicyParams], alpha: float, *,
                seed: int, episode: int, greedy: bool = False,
                evaluation: bool = False) -> tuple[list[Trajectory], EpisodeMetrics]:
    """Play one episode with one policy per UAV (independent world, discarded afterwards)."""
    n, T = config.n_uavs, config.episode_len
    if len(policies) != n:
        raise ValueError(f"need {n} policies, got {len(policies)}")
    shape = policies[0].shape
    if any(p.shape != shape for p in policies):
        raise ShapeMismatch("policies do not share one shape")
    if shape[0] != config.obs_dim or shape[2] != env.N_ACTIONS:
        raise ShapeMismatch(f"policy shape {shape} does not fit obs_dim {config.obs_dim}")

    jam_purpose, act_purpose = ("eval-jammer", "eval-act") if evaluation else ("jammer", "act")
    world = env.init_world(config, seed, episode, jammer_purpose=jam_purpose)
    rngs = [stream(seed, act_purpose, episode, i) for i in range(n)]
    stack = _stack(policies)

    obs_log = np.empty((T, n, config.obs_dim))
    act_log = np.empty((T, n), dtype=np.int64)
    sugg_log = np.empty((T, n), dtype=np.int64)
    rew_log = np.empty((T, n))
    cost_log = np.empty((T, n))
    attacks = 0
    for t in range(T):
        env.step_kinematics(world)
        env.jammer_step(world)
        obs = env.observe_all(world)
        suggested = suggest_all(world.roles, world.link_up, world.consec_jammed, config.persist_threshold)
        actions = _draw(stacked_forward(stack, obs), rngs, greedy)
        _, costs = env.apply_actions(world, actions)
        _, outcome = env.update_connectivity(world)
        outcome.per_agent_cost = costs
        outcome.per_agent_agree = actions == suggested
        obs_log[t], act_log[t], sugg_log[t] = obs, actions, suggested
        rew_log[t] = env.compute_rewards(outcome, alpha, config.w1, config.w2)
        cost_log[t] = costs
        attacks += outcome.attack_success

    trajectories = [Trajectory(obs_log[:, i].copy(), act_log[:, i].copy(), rew_log[:, i].copy(),
                               sugg_log[:, i].copy()) for i in range(n)]
    metrics = EpisodeMetrics(
        episode=episode,
        attack_success_rate=attacks / T,
        defense_cost=float(cost_log.sum()),
        mean_reward=float(rew_log.mean()),
        agreement_rate=float(np.mean(act_log == sugg_log)),
    )
    return trajectories, metrics


def hyper_from_config(config: ExperimentConfig) -> TrainHyper:
    return TrainHyper(config.learning_rate, config.discount, config.baseline_decay, config.entropy_coef)


def train_frl(config: ExperimentConfig, total_episodes: int,
              on_round: Callable[[FederationRoundLog, PolicyParams], None] | None = None,
              ) -> tuple[PolicyParams, list[EpisodeMetrics], list[FederationRoundLog]]:
    """Train N local policies with FedAvg every ``fed_period`` episodes.

    Every agent starts from the same parameters (drawn from the agent-0 init
    stream). If the last episode does not close a round, a final aggregation
    is performed and logged so the returned global policy is always a FedAvg
    output.
    """
    n = config.n_uavs
    seed = config.master_seed
    hyper = hyper_from_config(config)
    start = init_params(config.obs_dim, config.hidden_dim, stream(seed, "init", 0, 0))
    policies = [start.copy() for _ in range(n)]
    baselines: list[float | None] = [None] * n
    history: list[EpisodeMetrics] = []
    rounds: list[FederationRoundLog] = []
    since_round = 0
    alpha = alpha_schedule(config.alpha0, config.alpha_decay, 0)

    def aggregate(episodes_done: int):
        nonlocal policies
        pre = tuple(p.checksum() for p in policies)
        global_params = fedavg(policies)
        policies = [global_params.copy() for _ in range(n)]
        entry = FederationRoundLog(len(rounds), pre, global_params.checksum(), episodes_done, alpha)
        rounds.append(entry)
        if on_round is not None:
            on_round(entry, global_params)
        return global_params

    global_params = start
    for ep in range(total_episodes):
        alpha = alpha_schedule(config.alpha0, config.alpha_decay, ep)
        trajectories, metrics = run_episode(config, policies, alpha, seed=seed, episode=ep)
        history.append(metrics)
        for i in range(n):
            try:
                policies[i], baselines[i] = reinforce_update(policies[i], trajectories[i], hyper, baselines[i])
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"round {len(rounds)}, episode {ep}, agent {i}: {exc}") from exc
        since_round += 1
        if since_round == config.fed_period:
            global_params = aggregate(ep + 1)
            since_round = 0
        if (ep + 1) % 100 == 0:
            log.debug("frl n=%d episode %d asr=%.3f cost=%.1f", n, ep + 1,
                      metrics.attack_success_rate, metrics.defense_cost)
    if since_round or not rounds:
        global_params = aggregate(total_episodes)
    return global_params, history, rounds
