"""Day-ahead scheduling of a multi-vector energy system under forecast error."""

from .benchmark import InfeasibleScheduleError, benchmark_schedule, build_day_ahead_lp
from .core import (ConfigError, CostLedger, DayProfile, ErrorSample, PriceBook, Schedule, SystemConfig,
                   check_feasibility, total_cost_day)
from .data import Dataset, ErrorSpec, ProfileSpec, build_dataset
from .neural import NetworkParams, TrainConfig, enforce_constraints, forward_raw, schedule, train
from .sim import adjust_soc, run_experiment, settle_day

__all__ = [
    "ConfigError", "CostLedger", "DayProfile", "ErrorSample", "PriceBook", "Schedule", "SystemConfig",
    "check_feasibility", "total_cost_day", "InfeasibleScheduleError", "benchmark_schedule",
    "build_day_ahead_lp", "Dataset", "ErrorSpec", "ProfileSpec", "build_dataset", "NetworkParams",
    "TrainConfig", "enforce_constraints", "forward_raw", "schedule", "train", "adjust_soc",
    "run_experiment", "settle_day",
]
