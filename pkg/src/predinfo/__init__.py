"""Predictive information, learning curves and minimal-risk oracles for sequential data."""

__version__ = "0.1.0"

from .bounds import BoundSpec, bound_value
from .core import CurveEstimate, RiskReport, SequenceDataset, WindowPairBatch, make_rng_stream, sample_window_pairs
from .critics import CriticSpec, build_critic, score_matrix
from .generators import IsingConfig, KernelSpec, sample_ar1_vector, sample_ar_process, sample_gp, sample_ising_chain
from .mi_estimation import TrainConfig, estimate_lambda_curve, gaussian_ipred, plugin_ipred, train_ipred
from .oracles import (ar1_ipred_exact, gaussian_ipred_closed_form, ridge_entropy_rate,
                      theoretical_learning_curve)
from .risk import FitConfig, PredictorSpec, critical_zone, dimension_estimate, fit_predictor, risk_oracle

__all__ = [
    "BoundSpec", "CriticSpec", "CurveEstimate", "FitConfig", "IsingConfig", "KernelSpec", "PredictorSpec",
    "RiskReport", "SequenceDataset", "TrainConfig", "WindowPairBatch", "ar1_ipred_exact", "bound_value",
    "build_critic", "critical_zone", "dimension_estimate", "estimate_lambda_curve", "fit_predictor",
    "gaussian_ipred", "gaussian_ipred_closed_form", "make_rng_stream", "plugin_ipred", "ridge_entropy_rate",
    "risk_oracle", "sample_ar1_vector", "sample_ar_process", "sample_gp", "sample_ising_chain",
    "sample_window_pairs", "score_matrix", "theoretical_learning_curve", "train_ipred",
]
