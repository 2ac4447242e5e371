"""Proportional volume sampling for A-optimal and generalized-ratio experimental design."""

from .errors import (DesignError, InfeasibleError, InvalidInputError, SizeCapError,
                     DegenerateMeasureError)
from .instance import DesignInstance, load_instance, save_instance
from .linalg import Selection
from .relax import ObjectiveSpec, FractionalSolution, solve_relaxation
from .sampler import HardCoreMeasure, RegimeChoice, build_measure
from .pipeline import RunReport, run_design, evaluate_gap, rip_subset, eopt_experiment, bench

__version__ = "0.1.0"

__all__ = [
    "DesignError", "InfeasibleError", "InvalidInputError", "SizeCapError",
    "DegenerateMeasureError", "DesignInstance", "load_instance", "save_instance",
    "Selection", "ObjectiveSpec", "FractionalSolution", "solve_relaxation",
    "HardCoreMeasure", "RegimeChoice", "build_measure", "RunReport", "run_design",
    "evaluate_gap", "rip_subset", "eopt_experiment", "bench",
]
