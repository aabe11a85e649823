"""
esrcontrol Application Layer

Gradient estimators and the optimization engine, experiment configs,
campaigns and sweeps, gradient checks and run artifacts.
"""

from .bus import EventBus, InProcessBus, log_progress
from .campaign import CampaignResult, SweepTable, TrialOutcome, run_campaign, run_trial, sweep, trial_seed
from .config import ExperimentConfig, config_hash, load_config, parse_config
from .engine import IterationRecord, OptimizationRun, Optimizer, run_optimization
from .gradcheck import CheckResult, CheckSettings, run_gradcheck
from .optimizers import (
    BasisSpec,
    OptimizerConfig,
    fd_gradient,
    grape_gradient,
    hqca_gradient,
    learning_rate_schedule,
)
from .recorder import ArtifactSession
from .registry import available_methods, get_method, gradient_method

__all__ = [
    "EventBus",
    "InProcessBus",
    "log_progress",
    "CampaignResult",
    "SweepTable",
    "TrialOutcome",
    "run_campaign",
    "run_trial",
    "sweep",
    "trial_seed",
    "ExperimentConfig",
    "config_hash",
    "load_config",
    "parse_config",
    "IterationRecord",
    "OptimizationRun",
    "Optimizer",
    "run_optimization",
    "CheckResult",
    "CheckSettings",
    "run_gradcheck",
    "BasisSpec",
    "OptimizerConfig",
    "fd_gradient",
    "grape_gradient",
    "hqca_gradient",
    "learning_rate_schedule",
    "ArtifactSession",
    "available_methods",
    "get_method",
    "gradient_method",
]
