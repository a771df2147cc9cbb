"""Learning-based path following for a quadrotor: a model predictive
path-following planner on top of a GP-augmented feedback-linearizing
tracker, with guidance-law and tracking-MPC baselines."""

from .config import ExperimentConfig, SweepItem, expand_sweep, load_experiment
from .gp import GPConfig, GPModel
from .harness import MetricsReport, RunLog, compare, max_error, rmse, run_scenario, run_sweep
from .lbfblc import Gains, control_step
from .mpfc import MPFCSolver, OcpConfig, OcpSolution
from .paths import PathSpec
from .quadrotor import PlantState, QuadParams
from .wind import WindModel, random_scenario

__all__ = [
    "ExperimentConfig", "SweepItem", "expand_sweep", "load_experiment",
    "GPConfig", "GPModel",
    "MetricsReport", "RunLog", "compare", "max_error", "rmse", "run_scenario", "run_sweep",
    "Gains", "control_step",
    "MPFCSolver", "OcpConfig", "OcpSolution",
    "PathSpec", "PlantState", "QuadParams", "WindModel", "random_scenario",
]

__version__ = "0.1.0"
