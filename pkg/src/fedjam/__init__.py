"""Federated vs centralized policy-gradient learning of anti-jamming tool selection for a UAV swarm."""
from .config import ConfigError, ExperimentConfig, JammerStrategy, load_config
from .env import ToolAction

__all__ = ["ConfigError", "ExperimentConfig", "JammerStrategy", "ToolAction", "load_config"]
__version__ = "0.1.0"
