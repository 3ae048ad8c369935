"""Multi-agent VIP protection: threat metric, rewards and DDPG/MADDPG training."""

from .config import LearnerKind, RewardKind, WorldConfig, load_config, validate_config
from .rng import RngStream, derive_stream
from .state import AgentAction, EntityKind, EntityState, WorldState
from .threat import ThreatParams, ThreatReport, instantaneous_threat, line_of_sight, threat_level, total_threat

__version__ = "0.1.0"
