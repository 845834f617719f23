"""Cramer-von Mises goodness-of-fit tests for ergodic diffusions with an unknown shift."""
from __future__ import annotations

from .errors import (
    ConditionError,
    ConfigError,
    DomainError,
    NumericalError,
    ShiftGofError,
    SimulationDiverged,
    TableError,
    TailTruncationError,
)
from .estimators import edf, kernel_density, lte_density, mde_shift, mle_shift
from .gof import cvm_edf, cvm_kernel, cvm_lte, decide, ks_statistics
from .law import InvariantLaw, build_law
from .limits import LimitSampleBatch, QuantileTable, estimate_quantiles, load_table, simulate_limit
from .models import ShiftDriftModel, check_conditions, get_model
from .simulate import InitRule, Path, alternative_path, simulate_path

__all__ = [
    "ConditionError", "ConfigError", "DomainError", "NumericalError", "ShiftGofError",
    "SimulationDiverged", "TableError", "TailTruncationError",
    "edf", "kernel_density", "lte_density", "mde_shift", "mle_shift",
    "cvm_edf", "cvm_kernel", "cvm_lte", "decide", "ks_statistics",
    "InvariantLaw", "build_law",
    "LimitSampleBatch", "QuantileTable", "estimate_quantiles", "load_table", "simulate_limit",
    "ShiftDriftModel", "check_conditions", "get_model",
    "InitRule", "Path", "alternative_path", "simulate_path",
]
