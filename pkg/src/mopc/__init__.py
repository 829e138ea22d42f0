"""Bandwidth allocation and path selection under path-cardinality caps."""
from .admm import SolveOptions, solve_mopc, solve_num
from .baseline import FwOptions, build_relaxed, fw_solve, project_cardinality, run_baseline
from .gen import GenConfig, desk_scale, generate_instance
from .model import (
    Allocation,
    InstanceError,
    Metrics,
    ProblemInstance,
    SolveReport,
    cardinality_ok,
    compute_metrics,
    load_instance,
    save_instance,
)

__all__ = [
    "Allocation", "FwOptions", "GenConfig", "InstanceError", "Metrics", "ProblemInstance",
    "SolveOptions", "SolveReport", "build_relaxed", "cardinality_ok", "compute_metrics",
    "desk_scale", "fw_solve", "generate_instance", "load_instance", "project_cardinality",
    "run_baseline", "save_instance", "solve_mopc", "solve_num",
]
