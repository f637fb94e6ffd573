"""Two-layer tanh/softmax policy with hand-written gradients and a REINFORCE update.

Flat parameter order is W1 (row-major), b1, W2 (row-major), b2. Checkpoint
blobs are little-endian: 8 magic bytes, three uint32 dims (obs, hidden,
out), then the flat vector as float64.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

MAGIC = b"FJPOLv1\x00"
_HEADER = struct.Struct("<8sIII")


class DimensionError(ValueError):
    pass


class TrainingDivergence(FloatingPointError):
    """Non-finite gradient or parameters during an update."""


@dataclass
class PolicyParams:
    W1: np.ndarray  # hidden x obs
    b1: np.ndarray
    W2: np.ndarray  # out x hidden
    b2: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.obs_dim, self.hidden_dim, self.out_dim)

    @property
    def size(self) -> int:
        h, d, k = self.hidden_dim, self.obs_dim, self.out_dim
        return h * d + h + k * h + k

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    @classmethod
    def unflatten(cls, flat: np.ndarray, obs_dim: int, hidden_dim: int, out_dim: int) -> "PolicyParams":
        flat = np.asarray(flat, dtype=np.float64)
        sizes = [hidden_dim * obs_dim, hidden_dim, out_dim * hidden_dim, out_dim]
        if flat.shape != (sum(sizes),):
            raise DimensionError(f"flat vector has shape {flat.shape}, expected ({sum(sizes)},)")
        a, b, c = np.cumsum(sizes)[:3]
        return cls(flat[:a].reshape(hidden_dim, obs_dim).copy(), flat[a:b].copy(),
                   flat[b:c].reshape(out_dim, hidden_dim).copy(), flat[c:].copy())

    def with_flat(self, flat: np.ndarray) -> "PolicyParams":
        return PolicyParams.unflatten(flat, *self.shape)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, *self.shape)
        return header + self.flatten().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PolicyParams":
        if len(blob) < _HEADER.size:
            raise ValueError("truncated policy blob")
        magic, d, h, k = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError("not a policy blob (bad magic)")
        flat = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        return cls.unflatten(flat.astype(np.float64), d, h, k)

    def checksum(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]


def save_params(params: PolicyParams, path: str | Path) -> None:
    Path(path).write_bytes(params.to_bytes())


def load_params(path: str | Path) -> PolicyParams:
    return PolicyParams.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float
    discount: float
    baseline_decay: float = 0.99
    entropy_coef: float = 0.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if not 0 <= self.baseline_decay < 1:
            raise ValueError("baseline_decay must lie in [0, 1)")


@dataclass
class Trajectory:
    """One agent's episode: observations, actions taken, rewards, suggested actions."""

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    suggested: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[tuple[np.ndarray, int, float, int]]:
        for t in range(len(self)):
            yield self.observations[t], int(self.actions[t]), float(self.rewards[t]), int(self.suggested[t])


def init_params(obs_dim: int, hidden_dim: int, rng: np.random.Generator, out_dim: int = 4) -> PolicyParams:
    """Glorot-uniform weights, zero biases."""
    if min(obs_dim, hidden_dim, out_dim) < 1:
        raise DimensionError("dimensions must be >= 1")
    lim1 = np.sqrt(6.0 / (obs_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + out_dim))
    W1 = rng.uniform(-lim1, lim1, size=(hidden_dim, obs_dim))
    W2 = rng.uniform(-lim2, lim2, size=(out_dim, hidden_dim))
    return PolicyParams(W1, np.zeros(hidden_dim), W2, np.zeros(out_dim))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_obs(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != params.obs_dim:
        raise DimensionError(f"observation has {obs.shape[-1]} entries, policy expects {params.obs_dim}")
    return obs


def forward(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Action probabilities; obs may be a single row or a (T, obs_dim) batch."""
    obs = _check_obs(params, obs)
    hidden = np.tanh(obs @ params.W1.T + params.b1)
    return softmax(hidden @ params.W2.T + params.b2)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw with a single uniform."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def greedy_action(probs: np.ndarray) -> int:
    return int(np.argmax(probs))


def _backprop(params: PolicyParams, obs: np.ndarray, hidden: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
    gW2 = dlogits.T @ hidden
    gb2 = dlogits.sum(axis=0)
    dpre = (dlogits @ params.W2) * (1.0 - hidden ** 2)
    gW1 = dpre.T @ obs
    gb1 = dpre.sum(axis=0)
    return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def weighted_score(params: PolicyParams, obs: np.ndarray, actions: np.ndarray, weights: np.ndarray,
                   entropy_coef: float = 0.0) -> np.ndarray:
    """sum_t weights[t] * grad log pi(a_t|s_t) + entropy_coef * sum_t grad H(pi(.|s_t))."""
    obs = np.atleast_2d(_check_obs(params, obs))
    actions = np.asarray(actions, dtype=np.int64)
    hidden = np.tanh(obs @ params.W1.T + params.b1)
    probs = softmax(hidden @ params.W2.T + params.b2)
    dlogits = -probs
    dlogits[np.arange(len(actions)), actions] += 1.0
    dlogits *= np.asarray(weights, dtype=np.float64)[:, None]
    if entropy_coef:
        logp = np.log(np.maximum(probs, np.finfo(float).tiny))
        ent = -(probs * logp).sum(axis=1, keepdims=True)
        dlogits -= entropy_coef * probs * (logp + ent)
    return _backprop(params, obs, hidden, dlogits)


def grad_log_prob(params: PolicyParams, obs: np.ndarray, action: int) -> np.ndarray:
    """Flat gradient of log pi(action | obs) with respect to all parameters."""
    obs = _check_obs(params, obs)
    if obs.ndim != 1:
        raise DimensionError("grad_log_prob takes a single observation")
    if not 0 <= action < params.out_dim:
        raise DimensionError(f"action {action} outside policy output")
    return weighted_score(params, obs[None, :], np.array([action]), np.ones(1))


def discounted_returns(rewards: np.ndarray, discount: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


def reinforce_update(params: PolicyParams, traj: Trajectory, hyper: TrainHyper,
                     baseline: float | None) -> tuple[PolicyParams, float]:
    """One REINFORCE step over a whole episode.

    A baseline of None means no episode has been seen yet; it is seeded with
    this episode's mean return. Returns the new params and the updated EMA
    baseline.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    returns = discounted_returns(np.asarray(traj.rewards, dtype=np.float64), hyper.discount)
    mean_return = float(returns.mean())
    if baseline is None:
        baseline = mean_return
    advantages = returns - baseline
    with np.errstate(invalid="ignore", over="ignore"):
        grad = weighted_score(params, traj.observations, traj.actions, advantages, hyper.entropy_coef)
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise TrainingDivergence(f"{bad} non-finite gradient entries (baseline={baseline!r}, "
                                 f"max |advantage|={float(np.max(np.abs(advantages)))!r})")
    with np.errstate(over="ignore", invalid="ignore"):
        flat = params.flatten() + hyper.learning_rate * grad
    if not np.all(np.isfinite(flat)):
        raise TrainingDivergence("parameters became non-finite after the update")
    new_baseline = hyper.baseline_decay * baseline + (1.0 - hyper.baseline_decay) * mean_return
    return params.with_flat(flat), new_baseline
