"""Sparse tensor completion: CP/CPD-S, Tucker, tensor-train and a small
neural model, TenSemble ensembles, synthetic benchmark generators and an
experiment harness."""

__version__ = "0.1.0"

from .tensor import (  # noqa: E402
    DenseTensor,
    SparseTensor,
    SplitSpec,
    TensorError,
    mae,
    normalized_error,
    rmse,
    sample_observed,
    split_entries,
)
from .sptn import read_tensor, write_tensor  # noqa: E402
from .models import CPModel, ModelInit, NeuralModel, TTModel, TuckerModel, init_model, load_model, save_model  # noqa: E402
from .smoothness import SmoothnessConfig, SmoothnessRegularizer, kernel_weights  # noqa: E402
from .training import TrainConfig, TrainTrace, decompose_dense, fit_model, naive_baseline, train  # noqa: E402
from .ensemble import EnsembleModel, EnsembleSpec, load_ensemble, save_ensemble, train_ensemble  # noqa: E402
from .methods import MethodSpec, complete, method  # noqa: E402
from .harness import (  # noqa: E402
    ExperimentReport,
    ExperimentSpec,
    cross_dataset_completion,
    lambda_sensitivity,
    rank_scan,
    run_benchmark,
    sparsity_sweep,
    timing_report,
)

__all__ = [
    "__version__",
    "DenseTensor", "SparseTensor", "SplitSpec", "TensorError",
    "mae", "rmse", "normalized_error", "sample_observed", "split_entries",
    "read_tensor", "write_tensor",
    "CPModel", "TuckerModel", "TTModel", "NeuralModel", "ModelInit", "init_model", "save_model", "load_model",
    "SmoothnessConfig", "SmoothnessRegularizer", "kernel_weights",
    "TrainConfig", "TrainTrace", "train", "fit_model", "decompose_dense", "naive_baseline",
    "EnsembleSpec", "EnsembleModel", "train_ensemble", "save_ensemble", "load_ensemble",
    "MethodSpec", "method", "complete",
    "ExperimentSpec", "ExperimentReport", "run_benchmark", "sparsity_sweep", "lambda_sensitivity",
    "rank_scan", "cross_dataset_completion", "timing_report",
]
