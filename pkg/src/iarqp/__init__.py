"""Adaptive regularization with inexact function values and random derivatives."""
from .bench import SweepRow, SweepSpec, emit, fit_slope, read_rows, run_sweep
from .criticality import measures, phi_bruteforce, phi_order1, phi_order2, termination_test
from .driver import (CategoryCounts, Config, ConfigError, EventFlags, IterationRecord, RunResult,
                     count_categories, detect_events, run, theory_constants)
from .oracles import NoiseSpec, builtin_problems, get_problem
from .reg_model import InnerSolverError, RegModel, compute_step
from .tensor_taylor import DerivativeBundle, as_bundle, taylor_decrement

__all__ = [
    "CategoryCounts", "Config", "ConfigError", "DerivativeBundle", "EventFlags",
    "InnerSolverError", "IterationRecord", "NoiseSpec", "RegModel", "RunResult", "SweepRow",
    "SweepSpec", "as_bundle", "builtin_problems", "compute_step", "count_categories",
    "detect_events", "emit", "fit_slope", "get_problem", "measures", "phi_bruteforce",
    "phi_order1", "phi_order2", "read_rows", "run", "run_sweep", "taylor_decrement",
    "termination_test", "theory_constants",
]
