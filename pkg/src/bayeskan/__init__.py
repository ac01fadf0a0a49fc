"""Bayesian Kolmogorov-Arnold networks for tabular binary classification."""

__version__ = "0.1.0"

from .data import Dataset, DataError, load_dataset, load_heart, load_pima
from .model import BayesKanModel, ModelSpec, SplineConfig, model_forward, predict_proba
from .splines import KnotVector, basis_derivatives, basis_values, build_knots
from .training import TrainConfig, TrainingDivergence, elbo_loss, train
from .uncertainty import credible_interval, decompose, mc_predict, mc_predict_batch
from .variational import GaussianVariational, PriorSpec, kl_gaussian

__all__ = [
    "BayesKanModel",
    "DataError",
    "Dataset",
    "GaussianVariational",
    "KnotVector",
    "ModelSpec",
    "PriorSpec",
    "SplineConfig",
    "TrainConfig",
    "TrainingDivergence",
    "basis_derivatives",
    "basis_values",
    "build_knots",
    "credible_interval",
    "decompose",
    "elbo_loss",
    "kl_gaussian",
    "load_dataset",
    "load_heart",
    "load_pima",
    "mc_predict",
    "mc_predict_batch",
    "model_forward",
    "predict_proba",
    "train",
]
