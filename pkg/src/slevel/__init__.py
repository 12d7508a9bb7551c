"""Stochastic feasible level-set methods for expectation-constrained convex programs."""

from .geometry import GeometrySpec, compute_omega, iteration_bound_t, iteration_bound_w
from .levelset import (DflsConfig, LevelNotAboveOptimumError, LevelTrace, SflsConfig, derive_tolerances,
                       dfls_solve, estimate_initial_bound, outer_iteration_bound, sfls_solve)
from .oracle import OracleConfig, run_ovsmd, run_smd
from .soec import Ball, Box, Exact, Product, Saa, SaddleFunction, SoecProblem, compute_metrics, evaluate_p

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "DflsConfig", "Exact", "GeometrySpec", "LevelNotAboveOptimumError", "LevelTrace",
    "OracleConfig", "Product", "Saa", "SaddleFunction", "SflsConfig", "SoecProblem", "compute_metrics",
    "compute_omega", "derive_tolerances", "dfls_solve", "estimate_initial_bound", "evaluate_p",
    "iteration_bound_t", "iteration_bound_w", "outer_iteration_bound", "run_ovsmd", "run_smd", "sfls_solve",
]
