"""AC transmission switching as a reinforcement-learning problem."""
from .case import GridCase, load_case, parse_case, validate
from .environment import EnvConfig, TransmissionSwitchingEnv
from .powerflow import check_connectivity, solve_newton_raphson

__version__ = "0.1.0"

__all__ = [
    "EnvConfig",
    "GridCase",
    "TransmissionSwitchingEnv",
    "check_connectivity",
    "load_case",
    "parse_case",
    "solve_newton_raphson",
    "validate",
]
