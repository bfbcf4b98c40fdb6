"""Per-instance algorithm configuration with SVR performance maps.

Learn a Gaussian-kernel epsilon-SVR map from (instance features,
configuration, performance) records, then search the constrained one-hot
configuration space for the configuration with the best predicted value.
"""

from ._accel import backend, set_backend
from .configspace import ConfigurationSpace, Configuration, LinearConstraint, Parameter
from .cssp import CsspProblem, CsspSolution, build_problem, solve, solve_bnb, solve_enumerate, solve_local
from .dataset import Dataset, normalize_performance, split_instances
from .errors import SvrConfError
from .evaluate import EvalReport, cssp_quality, win_stats
from .svr import SvrHyper, SvrModel, cmae, mae, predict, train

__version__ = "0.1.0"

__all__ = [
    "ConfigurationSpace", "Configuration", "LinearConstraint", "Parameter",
    "CsspProblem", "CsspSolution", "build_problem", "solve", "solve_bnb", "solve_enumerate", "solve_local",
    "Dataset", "normalize_performance", "split_instances",
    "SvrConfError", "EvalReport", "cssp_quality", "win_stats",
    "SvrHyper", "SvrModel", "cmae", "mae", "predict", "train",
    "backend", "set_backend",
]
