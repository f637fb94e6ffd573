"""Swarm environment: formation kinematics, SINR links, jammer and defense tools.

The world is mutated in place by a single step pipeline

    step_kinematics -> jammer_step -> (agents choose) -> apply_actions -> update_connectivity

Each operation also returns the world so calls can be chained. Parent links
carry commands downward: GCS -> leader -> followers, so a link's receiver is
always the child UAV.
"""
from __future__ import annotations

import collections
import copy
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, JammerStrategy
from .seeding import stream

GCS = -1
NO_PARENT = -2

SINR_CLAMP_DB = 40.0


class ToolAction(enum.IntEnum):
    HOLD = 0
    ROLE_SHUFFLE = 1
    TOPOLOGY_RECONFIG = 2
    FREQ_HOP = 3


N_ACTIONS = len(ToolAction)


class Role(enum.Enum):
    LEADER = "Leader"
    FOLLOWER = "Follower"


class GeometryError(ValueError):
    """Zero transmitter-receiver or jammer-receiver distance."""


class UnknownAgentError(IndexError):
    pass


@dataclass(frozen=True)
class UavState:
    id: int
    angle: float
    position: tuple[float, float, float]
    heading: float
    speed: float
    role: Role
    channel: int
    parent: str | int | None  # "Gcs", a UAV id, or None
    consec_jammed: int
    last_action: ToolAction


@dataclass
class JammerState:
    position: np.ndarray
    strategy: JammerStrategy
    active_channel: int
    lag_buffer: collections.deque
    target_link: tuple[int, int] | None = None


@dataclass(frozen=True)
class LinkRecord:
    transmitter: int | None  # GCS, a UAV id, or None for an orphaned receiver
    receiver: int
    channel: int
    sinr_db: float
    up: bool


@dataclass(frozen=True)
class Topology:
    parent_map: tuple[int, ...]
    link_records: tuple[LinkRecord, ...]


@dataclass
class StepOutcome:
    links_down: int
    attack_success: bool
    per_agent_cost: np.ndarray | None = None
    per_agent_agree: np.ndarray | None = None


@dataclass
class WorldState:
    config: ExperimentConfig
    step: int
    angles: np.ndarray
    roles: np.ndarray  # 1 = leader
    channels: np.ndarray
    gcs_channel: int
    parents: np.ndarray
    consec_jammed: np.ndarray
    last_action: np.ndarray
    link_sinr: np.ndarray
    link_up: np.ndarray
    jammer: JammerState
    rng: np.random.Generator = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.angles)

    @property
    def leader(self) -> int:
        return int(np.flatnonzero(self.roles)[0])

    _pos_cache: tuple = field(default=(None, None), repr=False, compare=False)

    @property
    def positions(self) -> np.ndarray:
        """(n, 3) positions; cached until ``angles`` is rebound to a new array."""
        angles, pos = self._pos_cache
        if angles is self.angles:
            return pos
        cfg = self.config
        cx, cy = cfg.center
        pos = np.empty((self.n, 3))
        pos[:, 0] = cx + cfg.formation_radius * np.cos(self.angles)
        pos[:, 1] = cy + cfg.formation_radius * np.sin(self.angles)
        pos[:, 2] = cfg.altitude
        pos.flags.writeable = False
        self._pos_cache = (self.angles, pos)
        return pos

    @property
    def headings(self) -> np.ndarray:
        return self.angles + math.pi / 2

    @property
    def gcs_position(self) -> np.ndarray:
        cx, cy = self.config.center
        return np.array([cx, cy, 0.0])

    def uav(self, i: int) -> UavState:
        if not 0 <= i < self.n:
            raise UnknownAgentError(i)
        p = int(self.parents[i])
        parent = "Gcs" if p == GCS else (None if p == NO_PARENT else p)
        return UavState(
            id=i, angle=float(self.angles[i]), position=tuple(self.positions[i].tolist()),
            heading=float(self.headings[i]), speed=self.config.cruise_speed,
            role=Role.LEADER if self.roles[i] else Role.FOLLOWER,
            channel=int(self.channels[i]), parent=parent,
            consec_jammed=int(self.consec_jammed[i]), last_action=ToolAction(int(self.last_action[i])),
        )

    def topology(self) -> Topology:
        records = []
        for i in range(self.n):
            p = int(self.parents[i])
            records.append(LinkRecord(
                transmitter=None if p == NO_PARENT else p, receiver=i,
                channel=int(self.channels[i]), sinr_db=float(self.link_sinr[i]),
                up=bool(self.link_up[i])))
        return Topology(tuple(int(p) for p in self.parents), tuple(records))

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)


def init_world(config: ExperimentConfig, seed: int, episode: int = 0,
               jammer_purpose: str = "jammer") -> WorldState:
    """Evenly spaced star formation: UAV 0 leads, everyone on channel 0."""
    n = config.n_uavs
    jx, jy = config.jammer_position
    jammer = JammerState(
        position=np.array([float(jx), float(jy), 0.0]),
        strategy=config.jammer_strategy,
        active_channel=0,
        lag_buffer=collections.deque(maxlen=config.jammer_lag),
    )
    parents = np.zeros(n, dtype=np.int64)
    parents[0] = GCS
    roles = np.zeros(n, dtype=np.int8)
    roles[0] = 1
    world = WorldState(
        config=config, step=0,
        angles=2.0 * math.pi * np.arange(n) / n,
        roles=roles,
        channels=np.zeros(n, dtype=np.int64),
        gcs_channel=0,
        parents=parents,
        consec_jammed=np.zeros(n, dtype=np.int64),
        last_action=np.zeros(n, dtype=np.int64),
        link_sinr=np.zeros(n),
        link_up=np.zeros(n, dtype=bool),
        jammer=jammer,
        rng=stream(seed, jammer_purpose, episode),
    )
    _refresh_links(world)
    return world


def step_kinematics(world: WorldState) -> WorldState:
    """Rigid rotation of the formation about the GCS by omega * dt."""
    cfg = world.config
    world.angles = world.angles + (cfg.cruise_speed / cfg.formation_radius) * cfg.dt
    return world


def _sinr_db(cfg: ExperimentConfig, tx: np.ndarray, rx: np.ndarray, jammed: np.ndarray,
             jammer_pos: np.ndarray) -> np.ndarray:
    d2 = np.sum((tx - rx) ** 2, axis=-1)
    dj2 = np.sum((jammer_pos - rx) ** 2, axis=-1)
    if not (np.all(d2) and np.all(dj2)):
        raise GeometryError("zero link or jammer distance")
    half = -0.5 * cfg.path_loss_exp
    signal = cfg.tx_power * d2 ** half
    interference = np.where(jammed, cfg.jammer_power * dj2 ** half, 0.0)
    return 10.0 * np.log10(signal / (cfg.noise_floor + interference))


def link_sinr(world: WorldState, tx_pos, rx_pos, link_channel: int) -> float:
    """SINR in dB of one link under the current jammer channel."""
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
        raise GeometryError("non-finite position")
    jammed = np.array(world.jammer.active_channel == link_channel)
    return float(_sinr_db(world.config, tx, rx, jammed, world.jammer.position))


def jammer_step(world: WorldState, rng: np.random.Generator | None = None) -> JammerState:
    cfg = world.config
    jam = world.jammer
    rng = world.rng if rng is None else rng
    leader = world.leader
    # the buffer holds the GCS-leader channel seen at the start of the last `lag` steps
    jam.lag_buffer.append(int(world.channels[leader]))
    if jam.strategy is JammerStrategy.SWEEP:
        jam.active_channel = (world.step // cfg.jammer_lag) % cfg.n_channels
    elif jam.strategy is JammerStrategy.RANDOM:
        jam.active_channel = int(rng.integers(cfg.n_channels))
    else:
        # channel 0 until the buffer has filled
        full = len(jam.lag_buffer) == jam.lag_buffer.maxlen
        jam.active_channel = jam.lag_buffer[0] if full else 0

    if jam.strategy is JammerStrategy.REACTIVE_LEADER:
        jam.target_link = (GCS, leader)
    else:
        on = np.flatnonzero((world.channels == jam.active_channel) & (world.parents != NO_PARENT))
        jam.target_link = (int(world.parents[on[0]]), int(on[0])) if len(on) else None
    return jam


def _gcs_link_sinr(world: WorldState) -> np.ndarray:
    pos = world.positions
    jammed = world.channels == world.jammer.active_channel
    return _sinr_db(world.config, world.gcs_position[None, :], pos, jammed, world.jammer.position)


def _feasible_links(world: WorldState) -> np.ndarray:
    """feasible[u, v]: UAV u can serve as parent of UAV v on the current channels."""
    cfg = world.config
    pos = world.positions
    n = world.n
    feasible = np.zeros((n, n), dtype=bool)
    if n == 1:
        return feasible
    u, v = np.nonzero(~np.eye(n, dtype=bool))
    dist = np.sqrt(np.sum((pos[u] - pos[v]) ** 2, axis=-1))
    jammed = world.channels[v] == world.jammer.active_channel
    sinr = _sinr_db(cfg, pos[u], pos[v], jammed, world.jammer.position)
    feasible[u, v] = (dist <= cfg.comm_range) & (sinr >= cfg.sinr_threshold)
    return feasible


def min_hop_tree(feasible: np.ndarray, root: int) -> np.ndarray:
    """Parent array of a BFS tree from root; ties go to the lowest-id parent.

    Unreached nodes get NO_PARENT, the root gets GCS.
    """
    n = feasible.shape[0]
    parents = np.full(n, NO_PARENT, dtype=np.int64)
    parents[root] = GCS
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    frontier = [root]
    while frontier:
        nxt = []
        for v in range(n):
            if seen[v]:
                continue
            for u in frontier:  # frontier is sorted ascending
                if feasible[u, v]:
                    parents[v] = u
                    nxt.append(v)
                    break
        seen[nxt] = True
        frontier = nxt
    return parents


def apply_actions(world: WorldState, actions: Sequence[int]) -> tuple[WorldState, np.ndarray]:
    """Resolve one tool request per UAV in the fixed order role -> topology -> hop."""
    cfg = world.config
    acts = np.asarray(actions, dtype=np.int64)
    if acts.shape != (world.n,):
        raise ValueError(f"expected {world.n} actions, got shape {acts.shape}")
    if np.any((acts < 0) | (acts >= N_ACTIONS)):
        raise ValueError("action outside 0..3")
    requested = np.bincount(acts, minlength=N_ACTIONS)

    if requested[ToolAction.ROLE_SHUFFLE]:
        sinr = _gcs_link_sinr(world)
        best = int(np.flatnonzero(sinr >= sinr.max() - 1e-9)[0])
        old = world.leader
        if best != old:
            world.roles[old] = 0
            world.roles[best] = 1
            world.parents[best] = GCS
            world.parents[old] = best

    if requested[ToolAction.TOPOLOGY_RECONFIG]:
        world.parents = min_hop_tree(_feasible_links(world), world.leader)

    if requested[ToolAction.FREQ_HOP]:
        world.channels = (world.channels + 1) % cfg.n_channels
        world.gcs_channel = (world.gcs_channel + 1) % cfg.n_channels

    world.last_action = acts.copy()
    costs = np.asarray(cfg.tool_costs)[acts]
    return world, costs


def _refresh_links(world: WorldState) -> np.ndarray:
    """Recompute parent-link SINR and up flags; returns the co-channel mask."""
    cfg = world.config
    pos = world.positions
    n = world.n
    orphan = world.parents == NO_PARENT
    tx = np.where((world.parents == GCS)[:, None], world.gcs_position[None, :],
                  pos[np.clip(world.parents, 0, n - 1)])
    jammed = world.channels == world.jammer.active_channel
    sinr = np.full(n, np.nan)
    up = np.zeros(n, dtype=bool)
    ok = ~orphan
    if np.any(ok):
        sinr[ok] = _sinr_db(cfg, tx[ok], pos[ok], jammed[ok], world.jammer.position)
        dist = np.sqrt(np.sum((tx[ok] - pos[ok]) ** 2, axis=-1))
        up[ok] = (sinr[ok] >= cfg.sinr_threshold) & (dist <= cfg.comm_range)
    world.link_sinr = sinr
    world.link_up = up
    return jammed


def update_connectivity(world: WorldState) -> tuple[WorldState, StepOutcome]:
    """Refresh every parent link and count the ones the jammer took down.

    An orphaned UAV (no parent) counts as a down link on its own channel.
    """
    jammed = _refresh_links(world)
    hit = ~world.link_up & jammed
    world.consec_jammed = np.where(hit, world.consec_jammed + 1, 0)
    links_down = int(hit.sum())
    world.step += 1
    return world, StepOutcome(links_down=links_down, attack_success=links_down >= 1)


def observe_all(world: WorldState) -> np.ndarray:
    """Observation rows for every UAV, shape (n, 12 + n_channels)."""
    cfg = world.config
    n, k = world.n, cfg.n_channels
    pos = world.positions
    obs = np.zeros((n, 12 + k))
    obs[:, 0] = world.roles
    obs[:, 1] = pos[:, 0] / cfg.area_size
    obs[:, 2] = pos[:, 1] / cfg.area_size
    obs[:, 3] = np.sin(world.headings)
    obs[:, 4] = np.cos(world.headings)
    obs[np.arange(n), 5 + world.channels] = 1.0
    has_parent = world.parents != NO_PARENT
    obs[:, 5 + k] = world.link_up
    obs[:, 6 + k] = np.minimum(world.consec_jammed / cfg.persist_threshold, 1.0)
    sinr = np.where(has_parent, world.link_sinr, 0.0)
    norm = (np.clip(sinr, -SINR_CLAMP_DB, SINR_CLAMP_DB) + SINR_CLAMP_DB) / (2 * SINR_CLAMP_DB)
    obs[:, 7 + k] = np.where(has_parent, norm, 0.0)
    obs[np.arange(n), 8 + k + world.last_action] = 1.0
    return obs


def observe(world: WorldState, agent_id: int) -> np.ndarray:
    if not 0 <= agent_id < world.n:
        raise UnknownAgentError(agent_id)
    return observe_all(world)[agent_id]


def compute_reward(outcome: StepOutcome, agent_id: int, alpha: float,
                   w1: float = 1.0, w2: float = 0.1) -> float:
    base = -w1 * outcome.links_down - w2 * float(outcome.per_agent_cost[agent_id])
    if not alpha:
        return base  # adding 0.0 would turn -0.0 into +0.0
    return base + alpha * (1.0 if outcome.per_agent_agree[agent_id] else 0.0)


def compute_rewards(outcome: StepOutcome, alpha: float, w1: float = 1.0, w2: float = 0.1) -> np.ndarray:
    """All agents at once; same arithmetic as compute_reward, element for element."""
    base = -w1 * outcome.links_down - w2 * outcome.per_agent_cost.astype(float)
    if not alpha:
        return base
    return base + alpha * outcome.per_agent_agree.astype(float)


def snapshot(world: WorldState) -> str:
    """Plain-text dump of the world in a fixed field order (debugging aid)."""
    lines = [f"step {world.step}",
             f"gcs_channel {world.gcs_channel}",
             f"jammer {world.jammer.strategy.value} channel={world.jammer.active_channel} "
             f"target={world.jammer.target_link} buffer={list(world.jammer.lag_buffer)}"]
    for i in range(world.n):
        u = world.uav(i)
        x, y, z = u.position
        lines.append(
            f"uav {i} role={u.role.value} angle={u.angle!r} pos=({x!r}, {y!r}, {z!r}) "
            f"channel={u.channel} parent={u.parent} sinr={float(world.link_sinr[i])!r} "
            f"up={bool(world.link_up[i])} consec={u.consec_jammed} last={u.last_action.name}")
    return "\n".join(lines) + "\n"
