"""
Core Estimation Module
======================

Mixture fitting, trimmed regression, transition estimation, the noisy
mixture-of-experts estimator, baselines, benchmarking and persistence.
"""

from .gmm import GmmFitter, fit_gmm, posterior_tilde_z, select_k_bic
from .lts import LtsEstimator, lts_enumerate, lts_fit
from .transition import EgSolver, eg_gradient, eg_objective, fit_transition
from .moe import NoisyMoeEstimator, fit_noisy_moe, gate, predict, predict_many
from .baselines import MoeEmFitter, fit_moe_em, fit_moess, predict_moe
from .simbench import BenchmarkRunner, hungarian, run_benchmark
from .evaluation import HoldoutEvaluator, repeated_holdout
from .serialization import load_model, predict_model, save_model

__all__ = [
    # Mixture
    "GmmFitter",
    "fit_gmm",
    "posterior_tilde_z",
    "select_k_bic",
    # Trimmed regression
    "LtsEstimator",
    "lts_fit",
    "lts_enumerate",
    # Transition
    "EgSolver",
    "eg_objective",
    "eg_gradient",
    "fit_transition",
    # Noisy MoE
    "NoisyMoeEstimator",
    "fit_noisy_moe",
    "gate",
    "predict",
    "predict_many",
    # Baselines
    "MoeEmFitter",
    "fit_moe_em",
    "fit_moess",
    "predict_moe",
    # Benchmark and evaluation
    "BenchmarkRunner",
    "run_benchmark",
    "hungarian",
    "HoldoutEvaluator",
    "repeated_holdout",
    # Persistence
    "save_model",
    "load_model",
    "predict_model",
]
