"""Coefficient inverse problem for the 3D Helmholtz equation with multi-frequency backscatter data."""

from .forward import ConvergenceError, simulate_measurements, solve_ls
from .gcm import GCMConfig, ReconstructionResult, StageError, run_reconstruction
from .grid import DEFAULT_DOMAIN, Box, CoefficientField, Grid3, build_coefficient, make_grid
from .measurements import FrequencyGrid, MeasurementSet, PlaneField, PlaneGrid
from .pipeline import RunConfig

__all__ = [
    "Box", "CoefficientField", "ConvergenceError", "DEFAULT_DOMAIN", "FrequencyGrid", "GCMConfig",
    "Grid3", "MeasurementSet", "PlaneField", "PlaneGrid", "ReconstructionResult", "RunConfig",
    "StageError", "build_coefficient", "make_grid", "run_reconstruction", "simulate_measurements",
    "solve_ls",
]
