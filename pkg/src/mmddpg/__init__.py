"""Minimax DDPG with a fractional cost/disturbance-energy objective, plus DDPG and RARL baselines."""

__version__ = "0.1.0"

from .agents import AgentConfig, DdpgAgent, MinimaxAgent, RarlAgent, make_agent
from .envs import PointMassEnv, TwoLinkEnv, apply_param_scaling, make_env
from .evaluation import (GridConfig, RobustnessReport, SweepConfig, aggregate_across_seeds,
                         disturbance_sweep, export_report, load_report, parameter_grid_sweep,
                         rollout_discounted_cost)
from .train import Trainer, seed_streams

__all__ = [
    "AgentConfig", "DdpgAgent", "MinimaxAgent", "RarlAgent", "make_agent",
    "PointMassEnv", "TwoLinkEnv", "apply_param_scaling", "make_env",
    "GridConfig", "RobustnessReport", "SweepConfig", "aggregate_across_seeds",
    "disturbance_sweep", "export_report", "load_report", "parameter_grid_sweep",
    "rollout_discounted_cost", "Trainer", "seed_streams",
]
