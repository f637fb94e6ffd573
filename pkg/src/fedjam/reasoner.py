"""Rule-based stand-in for the on-board language model that suggests a defense tool."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ToolAction


@dataclass(frozen=True)
class ReasonerContext:
    is_leader: bool
    parent_link_up: bool
    consec_jammed: int
    physical_normal: bool = True


def suggest(ctx: ReasonerContext, persist_threshold: int) -> ToolAction:
    """First matching rule wins, most severe first."""
    persistent = ctx.consec_jammed >= persist_threshold
    if ctx.is_leader and persistent:
        return ToolAction.ROLE_SHUFFLE
    if not ctx.is_leader and not ctx.parent_link_up:
        return ToolAction.TOPOLOGY_RECONFIG
    if persistent:
        return ToolAction.FREQ_HOP
    return ToolAction.HOLD


def context_from_observation(obs: np.ndarray, n_channels: int, persist_threshold: int) -> ReasonerContext:
    """Recover the context from an observation row.

    The persistence entry is clamped at 1, so consec_jammed is only recovered
    exactly up to persist_threshold; that is all the rules need.
    """
    k = n_channels
    return ReasonerContext(
        is_leader=bool(obs[0] > 0.5),
        parent_link_up=bool(obs[5 + k] > 0.5),
        consec_jammed=int(round(float(obs[6 + k]) * persist_threshold)),
    )


def suggest_all(is_leader: np.ndarray, link_up: np.ndarray, consec_jammed: np.ndarray,
                persist_threshold: int) -> np.ndarray:
    """Vectorised suggest over a swarm; agrees with suggest element-wise."""
    persistent = consec_jammed >= persist_threshold
    leader = is_leader.astype(bool)
    up = link_up.astype(bool)
    out = np.full(len(leader), int(ToolAction.HOLD), dtype=np.int64)
    out[persistent] = ToolAction.FREQ_HOP
    out[~leader & ~up] = ToolAction.TOPOLOGY_RECONFIG
    out[leader & persistent] = ToolAction.ROLE_SHUFFLE
    return out
