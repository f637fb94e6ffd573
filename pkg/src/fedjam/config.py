"""Experiment configuration: defaults, validation and the flat key-value file format.

A config file is plain text with one ``key = value`` pair per line. Blank
lines and ``#`` comments are ignored. Every key is a field of
:class:`ExperimentConfig`; ``jammer_position`` is written as ``x, y``.
Environment variables named ``FEDJAM_<FIELD>`` (upper case) override the
file, and explicit overrides passed by the caller override both.
"""
from __future__ import annotations

import dataclasses
import enum
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

ENV_PREFIX = "FEDJAM_"


class ConfigError(ValueError):
    """Raised for unparseable or infeasible configurations."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class JammerStrategy(enum.Enum):
    SWEEP = "Sweep"
    REACTIVE_LEADER = "ReactiveLeader"
    RANDOM = "Random"

    @classmethod
    def parse(cls, text: str) -> "JammerStrategy":
        key = text.strip().replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown jammer strategy {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    n_uavs: int
    area_size: float = 1000.0
    formation_radius: float = 200.0
    altitude: float = 100.0
    cruise_speed: float = 10.0
    dt: float = 1.0
    n_channels: int = 4
    comm_range: float = 600.0
    tx_power: float = 1.0
    jammer_power: float = 10.0
    path_loss_exp: float = 2.0
    noise_floor: float = 1e-9
    sinr_threshold: float = 3.0
    safety_distance: float = 20.0
    episode_len: int = 200
    cost_hold: float = 0.0
    cost_role: float = 3.0
    cost_topo: float = 2.0
    cost_hop: float = 1.0
    w1: float = 1.0
    w2: float = 0.1
    alpha0: float = 1.0
    alpha_decay: float = 0.995
    persist_threshold: int = 5
    jammer_strategy: JammerStrategy = JammerStrategy.REACTIVE_LEADER
    jammer_lag: int = 3
    jammer_position: tuple[float, float] = (250.0, 250.0)
    fed_period: int = 10
    learning_rate: float = 0.001
    hidden_dim: int = 32
    discount: float = 0.95
    baseline_decay: float = 0.99
    entropy_coef: float = 0.0
    max_joint_actions: int = 65536
    master_seed: int = 0

    def __post_init__(self):
        validate(self)

    @property
    def obs_dim(self) -> int:
        return 12 + self.n_channels

    @property
    def center(self) -> tuple[float, float]:
        return (self.area_size / 2.0, self.area_size / 2.0)

    @property
    def tool_costs(self) -> tuple[float, float, float, float]:
        """Costs indexed by ToolAction encoding (Hold, RoleShuffle, TopologyReconfig, FreqHop)."""
        return (self.cost_hold, self.cost_role, self.cost_topo, self.cost_hop)

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def validate(cfg: ExperimentConfig) -> None:
    def need(cond: bool, name: str, msg: str):
        if not cond:
            raise ConfigError(name, msg)

    need(isinstance(cfg.n_uavs, int) and cfg.n_uavs >= 1, "n_uavs", "must be an integer >= 1")
    need(cfg.n_channels >= 2, "n_channels", "must be >= 2")
    need(cfg.episode_len >= 1, "episode_len", "must be >= 1")
    for name in ("area_size", "formation_radius", "comm_range", "dt"):
        need(getattr(cfg, name) > 0, name, "must be > 0")
    need(cfg.altitude >= 0, "altitude", "must be >= 0")
    need(cfg.cruise_speed >= 0, "cruise_speed", "must be >= 0")
    for name in ("tx_power", "noise_floor"):
        need(getattr(cfg, name) > 0, name, "must be > 0")
    # zero jammer power is the benign-world control
    need(cfg.jammer_power >= 0, "jammer_power", "must be >= 0")
    need(cfg.path_loss_exp > 0, "path_loss_exp", "must be > 0")
    for name in ("cost_hold", "cost_role", "cost_topo", "cost_hop"):
        need(getattr(cfg, name) >= 0, name, "must be >= 0")
    need(cfg.w1 >= 0 and cfg.w2 >= 0, "w1", "reward weights must be >= 0")
    need(cfg.alpha0 >= 0, "alpha0", "must be >= 0")
    need(0 < cfg.alpha_decay <= 1, "alpha_decay", "must lie in (0, 1]")
    need(cfg.persist_threshold >= 1, "persist_threshold", "must be >= 1")
    need(cfg.jammer_lag >= 1, "jammer_lag", "must be >= 1")
    need(cfg.fed_period >= 1, "fed_period", "must be >= 1")
    need(cfg.learning_rate >= 0, "learning_rate", "must be >= 0")
    need(cfg.hidden_dim >= 1, "hidden_dim", "must be >= 1")
    need(0 < cfg.discount <= 1, "discount", "must lie in (0, 1]")
    need(0 <= cfg.baseline_decay < 1, "baseline_decay", "must lie in [0, 1)")
    need(cfg.entropy_coef >= 0, "entropy_coef", "must be >= 0")
    need(cfg.max_joint_actions >= 4, "max_joint_actions", "must be >= 4")
    need(0 <= cfg.master_seed < 2**64, "master_seed", "must be a 64-bit unsigned integer")
    need(isinstance(cfg.jammer_strategy, JammerStrategy), "jammer_strategy", "not a JammerStrategy")

    need(cfg.formation_radius < cfg.area_size / 2, "formation_radius", "must be < area_size / 2")
    if cfg.n_uavs >= 2:
        chord = 2.0 * cfg.formation_radius * math.sin(math.pi / cfg.n_uavs)
        need(chord >= cfg.safety_distance, "safety_distance",
             f"formation spacing {chord:.3f} m is below the safety distance")
    jx, jy = cfg.jammer_position
    need(0 <= jx <= cfg.area_size and 0 <= jy <= cfg.area_size, "jammer_position", "must lie inside the area")


def _coerce(f: dataclasses.Field, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if f.name == "jammer_strategy":
        return JammerStrategy.parse(text)
    if f.name == "jammer_position":
        parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
        if len(parts) != 2:
            raise ValueError("expected 'x, y'")
        return (float(parts[0]), float(parts[1]))
    if kind == "int":
        return int(text, 0)
    if kind == "float":
        return float(text)
    return text


FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELD_NAMES:
            raise ConfigError(key, "unknown configuration key")
        values[key] = value
    return values


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for name in FIELD_NAMES:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            out[name] = environ[key]
    return out


def build_config(values: Mapping[str, Any]) -> ExperimentConfig:
    typed: dict[str, Any] = {}
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    for key, raw in values.items():
        if key not in by_name:
            raise ConfigError(key, "unknown configuration key")
        try:
            typed[key] = _coerce(by_name[key], raw)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None
    if "n_uavs" not in typed:
        raise ConfigError("n_uavs", "required (set it in the file or pass --swarm-size)")
    return ExperimentConfig(**typed)


def load_config(path: str | os.PathLike | None, overrides: Mapping[str, Any] | None = None,
                environ: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Resolve defaults < file < environment < explicit overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        values.update(parse_config_text(text))
    values.update(env_overrides(environ))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


def format_value(value: Any) -> str:
    if isinstance(value, JammerStrategy):
        return value.value
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render every field in declaration order; parse_config_text reads it back."""
    return "".join(f"{name} = {format_value(getattr(cfg, name))}\n" for name in FIELD_NAMES)
