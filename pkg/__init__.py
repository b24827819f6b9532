"""
Noisy MoE - Semi-supervised Mixture of Experts with Label Noise
===============================================================

A mixture of Gaussians is fitted to labeled and unlabeled covariates, each
cluster gets a trimmed least-squares expert, and a transition matrix maps
the unsupervised clusters to the labels the experts follow.

Quick Start:
    from noisy_moe import fit_model, predict

    model = fit_model(x_labeled, y_labeled, x_unlabeled, k=3)
    yhat = predict(model, x_new)

    print(model.transition.pi)
    print(model.diagnostics.retained_counts)
"""

__version__ = "1.0.0"
__description__ = "Semi-supervised noisy mixture of experts"

try:
    from .core.moe import fit_noisy_moe
    from .core.serialization import load_model, predict_model, save_model
    from .core.simbench import run_benchmark
    from .models.mixture import NoisyMoeConfig, NoisyMoeModel

    __all__ = [
        "fit_noisy_moe",
        "save_model",
        "load_model",
        "predict_model",
        "run_benchmark",
        "NoisyMoeConfig",
        "NoisyMoeModel",
        "fit_model",
        "predict",
        "__version__",
        "__description__",
    ]

except ImportError as e:
    # Fallback for development/testing
    import warnings

    warnings.warn(f"Could not import all modules: {e}")

    __all__ = ["__version__", "__description__"]


# Quick access functions for convenience
def fit_model(x_labeled, y_labeled, x_unlabeled=None, k: int = 2, alpha: float = 0.5):
    """
    Quick noisy mixture-of-experts fit with default settings

    Args:
        x_labeled: Labeled covariates, shape (n, p)
        y_labeled: Responses, shape (n,)
        x_unlabeled: Optional unlabeled covariates, shape (N, p)
        k (int): Number of clusters
        alpha (float): Retaining fraction of the trimmed regressions

    Returns:
        NoisyMoeModel: Fitted model

    Example:
        >>> model = fit_model(x, y, x_pool, k=3)
        >>> print(model)
    """
    return fit_noisy_moe(x_labeled, y_labeled, x_unlabeled, k, NoisyMoeConfig(alpha))


def predict(model, x):
    """
    Predictions of any fitted or loaded model for every row of x

    Example:
        >>> yhat = predict(load_model("model.json")[0], x_new)
    """
    return predict_model(model, x)
