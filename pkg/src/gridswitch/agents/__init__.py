"""Learning agents: DDSAC and the DDQN and PPO baselines."""
from .ddqn import DdqnAgent, DdqnConfig
from .ddsac import DdsacAgent, DdsacConfig
from .ppo import PpoAgent, PpoConfig

__all__ = ["DdqnAgent", "DdqnConfig", "DdsacAgent", "DdsacConfig", "PpoAgent", "PpoConfig"]
