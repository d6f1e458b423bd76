"""Stationary and evolving 2D quantum droplets with neural and spectral solvers."""

from .config import CaseLibrary, ExperimentConfig, OracleSettings, load_config
from .estimators import IinnSolver, PinnSolver
from .grid import (ComplexField, Grid2D, SpaceTimeDomain, make_grid, norm_squared_integral,
                   phase_aligned_relative_l2, relative_l2)
from .iinn import GaussianSum, IinnConfig, LinearModeSeed, build_seed, train_iinn
from .neural import MlpParams, glorot_normal_init
from .pinn import PinnConfig, train_pinn
from .potentials import Harmonic, PtHog, QuadWell, Tabulated, Zero
from .runner import CaseReport, run_case
from .spectral import (FieldSeries, StationaryProblem, evolve_split_step, linear_spectrum,
                       solve_stationary)

__version__ = "0.1.0"

__all__ = [
    "CaseLibrary", "CaseReport", "ComplexField", "ExperimentConfig", "FieldSeries",
    "GaussianSum", "Grid2D", "Harmonic", "IinnConfig", "IinnSolver", "LinearModeSeed",
    "MlpParams", "OracleSettings", "PinnConfig", "PinnSolver", "PtHog", "QuadWell",
    "SpaceTimeDomain", "StationaryProblem", "Tabulated", "Zero", "build_seed",
    "evolve_split_step", "glorot_normal_init", "linear_spectrum", "load_config", "make_grid",
    "norm_squared_integral", "phase_aligned_relative_l2", "relative_l2", "run_case",
    "solve_stationary", "train_iinn", "train_pinn",
]
