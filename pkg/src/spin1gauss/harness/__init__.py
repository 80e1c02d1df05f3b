from .config import ConfigError, ExperimentConfig
from .run import RunResult, SimulationError, analytic_fid, run_experiment, tau_gauss

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "SimulationError", "analytic_fid",
           "run_experiment", "tau_gauss"]
