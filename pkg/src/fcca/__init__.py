"""Exact counterfactual explanations, decision-boundary thresholds, tunable
supervised binarization, and compact surrogate decision trees.

The hot combinatorial kernels (candidate-grid counterfactual search and the
certified-optimal tree search) run on a compiled extension when available
and an equivalent pure-Python fallback otherwise; see
:data:`fcca.KERNEL_IMPLEMENTATION`.
"""

from ._kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .config import ConfigError, RunConfig, build_config
from .counterfactual import (
    CEProblem,
    CESolution,
    brute_force_oracle,
    solve_batch,
    solve_ce,
    solve_ensemble_ce,
    solve_linear_ce,
)
from .dataset import DataError, Dataset, load_csv, make_folds, scale_minmax
from .discretize import BinDataset, binarize, metrics
from .models import (
    Ensemble,
    LinearModel,
    load_model,
    predict,
    predict_batch,
    save_model,
    split_thresholds,
    train_gb,
    train_linear,
    train_rf,
)
from .pipeline import InfeasibleError, gtre_baseline, run_fcca, select_m, sweep_q
from .surrogate import SurrogateTree, evaluate, train_cart, train_optimal
from .thresholds import ThresholdBag, extract_thresholds, select_quantile

__version__ = "0.1.0"

__all__ = [
    "KERNEL_IMPLEMENTATION",
    "ConfigError",
    "RunConfig",
    "build_config",
    "CEProblem",
    "CESolution",
    "brute_force_oracle",
    "solve_batch",
    "solve_ce",
    "solve_ensemble_ce",
    "solve_linear_ce",
    "DataError",
    "Dataset",
    "load_csv",
    "make_folds",
    "scale_minmax",
    "BinDataset",
    "binarize",
    "metrics",
    "Ensemble",
    "LinearModel",
    "load_model",
    "predict",
    "predict_batch",
    "save_model",
    "split_thresholds",
    "train_gb",
    "train_linear",
    "train_rf",
    "InfeasibleError",
    "gtre_baseline",
    "run_fcca",
    "select_m",
    "sweep_q",
    "SurrogateTree",
    "evaluate",
    "train_cart",
    "train_optimal",
    "ThresholdBag",
    "extract_thresholds",
    "select_quantile",
    "__version__",
]
