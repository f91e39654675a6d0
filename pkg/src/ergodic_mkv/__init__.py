"""Simulation and ergodic estimation for McKean-Vlasov SDEs."""
from __future__ import annotations

from .analysis import (
    MseReport,
    RateFit,
    chaos_error,
    estimate_mse,
    fit_rate,
    invariant_moment,
    linear_mean,
    linear_variance,
    w2_1d,
)
from .config import ExperimentConfig, parse_config, parse_config_text
from .dynamics import IPS, SELF, CostLedger, ParticleSchedule, TimeGrid, simulate
from .errors import ConfigurationError, DivergenceError, InputOutputError, MkvError, NumericError, PreconditionError
from .estimators import ALGORITHMS, EstimatorAccumulator, ExperimentResult, estimate
from .experiment import run_experiment, run_sweep
from .model import ModelSpec, Observable, linear_model, polynomial_model, zero_model
from .planner import ParameterPlan, PlannerInput, consistency_check, plan, theoretical_cost

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ConfigurationError",
    "CostLedger",
    "DivergenceError",
    "EstimatorAccumulator",
    "ExperimentConfig",
    "ExperimentResult",
    "IPS",
    "InputOutputError",
    "MkvError",
    "ModelSpec",
    "MseReport",
    "NumericError",
    "Observable",
    "ParameterPlan",
    "ParticleSchedule",
    "PlannerInput",
    "PreconditionError",
    "RateFit",
    "SELF",
    "TimeGrid",
    "chaos_error",
    "consistency_check",
    "estimate",
    "estimate_mse",
    "fit_rate",
    "invariant_moment",
    "linear_mean",
    "linear_model",
    "linear_variance",
    "parse_config",
    "parse_config_text",
    "plan",
    "polynomial_model",
    "run_experiment",
    "run_sweep",
    "simulate",
    "theoretical_cost",
    "w2_1d",
    "zero_model",
]
