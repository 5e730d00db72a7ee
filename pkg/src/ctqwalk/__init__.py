"""Graph classification driven by trainable continuous-time quantum walks."""

__version__ = "0.1.0"

from .data import Dataset, FoldPlan, Graph, augment_degree_features, make_folds, parse_tu_dataset
from .model import ModelConfig, ModelParams, ablate, forward, init_params, loss, predict
from .tensor import Tensor, backward, no_grad
from .training import CVResult, TrainConfig, cross_validate, run_ablation, sweep, train_fold

__all__ = [
    "__version__",
    "Dataset", "FoldPlan", "Graph", "augment_degree_features", "make_folds",
    "parse_tu_dataset",
    "ModelConfig", "ModelParams", "ablate", "forward", "init_params", "loss",
    "predict",
    "Tensor", "backward", "no_grad",
    "CVResult", "TrainConfig", "cross_validate", "run_ablation", "sweep",
    "train_fold",
]
