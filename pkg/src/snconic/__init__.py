"""Self-normalized conic estimation for high-dimensional regression with errors in variables."""
__version__ = "0.1.0"

from .baselines import BaselineConfig, run_baseline
from .dataset import Dataset, read_dataset_csv, write_dataset_csv
from .estimator import EstimateReport, HnMode, LambdaMode, SnConfig, fit, refit, threshold
from .gamma import GammaEstimate, known_additive, mar_estimate
from .metrics_bench import ReplicationPlan, compute_metrics, run_replications, table_preset
from .simgen import SimConfig, generate
from .solver import ConicProgram, SolverSettings, SolverStatus, solve

__all__ = [
    "__version__",
    "BaselineConfig",
    "ConicProgram",
    "Dataset",
    "EstimateReport",
    "GammaEstimate",
    "HnMode",
    "LambdaMode",
    "ReplicationPlan",
    "SimConfig",
    "SnConfig",
    "SolverSettings",
    "SolverStatus",
    "compute_metrics",
    "fit",
    "generate",
    "known_additive",
    "mar_estimate",
    "read_dataset_csv",
    "refit",
    "run_baseline",
    "run_replications",
    "solve",
    "table_preset",
    "threshold",
    "write_dataset_csv",
]
