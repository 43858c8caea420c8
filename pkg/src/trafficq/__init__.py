"""Tabular Q-learning for network traffic signal timing with an adaptive action grid."""

from .agent import AgentParams, QTable, RunTrace, StateEncoder
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .harness import (
    Controller,
    OracleBudgetError,
    SweepResult,
    oracle_search,
    run_adaptive,
    run_fixed_time,
    run_regular,
    sweep_uncertainty,
)
from .horizon import ActionGrid, GenerationLog, HorizonParams, adaptive_train
from .network import Scenario, default_scenario, load_scenario, step
from .reward import RewardParams, reward
from .stochastics import UncertaintyConfig

__version__ = "0.1.0"

__all__ = [
    "AgentParams", "QTable", "RunTrace", "StateEncoder",
    "ConfigError", "ExperimentConfig", "default_config", "load_config",
    "Controller", "OracleBudgetError", "SweepResult", "oracle_search",
    "run_adaptive", "run_fixed_time", "run_regular", "sweep_uncertainty",
    "ActionGrid", "GenerationLog", "HorizonParams", "adaptive_train",
    "Scenario", "default_scenario", "load_scenario", "step",
    "RewardParams", "reward", "UncertaintyConfig",
]
