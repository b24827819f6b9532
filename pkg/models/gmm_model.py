"""
Gaussian Mixture Data Model
===========================

Fitted mixture of Gaussians for the covariates and its fitting configuration
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from utils.exceptions import ValidationError
from utils.validators import ArrayValidator


@dataclass(frozen=True)
class GmmFitConfig:
    """
    Settings for fitting a mixture of Gaussians by EM

    Attributes:
        k (int): Number of components
        max_iter (int): EM iteration cap per restart
        tol (float): Relative log-likelihood change that stops EM
        n_restarts (int): Independent k-means++ restarts; the best is kept
        cov_floor (float, optional): Ridge added to every covariance diagonal.
            None means 1e-6 times the mean diagonal of the global covariance.
        seed (int): Seed of the per-restart random streams
        n_jobs (int): Threads used to run restarts
    """

    k: int = 1
    max_iter: int = 500
    tol: float = 1e-8
    n_restarts: int = 5
    cov_floor: Optional[float] = None
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        ArrayValidator.require(self.k >= 1, f"k must be >= 1, got {self.k}")
        ArrayValidator.require(self.max_iter >= 1, "max_iter must be >= 1")
        ArrayValidator.require(self.tol > 0, "tol must be > 0")
        ArrayValidator.require(self.n_restarts >= 1, "n_restarts must be >= 1")
        ArrayValidator.require(
            self.cov_floor is None or self.cov_floor >= 0, "cov_floor must be >= 0"
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "n_restarts": self.n_restarts,
            "cov_floor": self.cov_floor,
            "seed": self.seed,
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GmmFitConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValidationError(f"Unknown GMM settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class GmmModel:
    """
    Mixture of Gaussians for X given the unsupervised cluster label

    Attributes:
        weights (np.ndarray): Mixing probabilities, shape (K,)
        means (np.ndarray): Component means, shape (K, p)
        covariances (np.ndarray): Component covariances, shape (K, p, p)
        log_likelihood (float): Training log-likelihood at convergence
            (NaN for parameters that were not fitted)
        n_iter (int): EM iterations used by the kept restart
        converged (bool): Whether the kept restart met the tolerance
        trace (List[float]): Log-likelihood after every EM iteration of the
            kept restart
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float = float("nan")
    n_iter: int = 0
    converged: bool = True
    trace: List[float] = field(default_factory=list)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covariances = np.asarray(self.covariances, dtype=float)
        if means.ndim == 1:
            means = means[np.newaxis, :]
        if covariances.ndim == 2:
            covariances = covariances[np.newaxis, :, :]

        k, p = means.shape
        if weights.shape != (k,) or covariances.shape != (k, p, p):
            raise ValidationError(
                f"Inconsistent GMM shapes: weights {weights.shape}, "
                f"means {means.shape}, covariances {covariances.shape}"
            )
        if not ArrayValidator.is_probability_vector(weights, tol=1e-10):
            raise ValidationError("GMM weights must be nonnegative and sum to 1")
        if not np.allclose(covariances, covariances.transpose(0, 2, 1), atol=1e-10):
            raise ValidationError("GMM covariances must be symmetric")

        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)

    @property
    def k(self) -> int:
        return int(self.means.shape[0])

    @property
    def p(self) -> int:
        return int(self.means.shape[1])

    @property
    def n_parameters(self) -> int:
        """Free parameters counted by BIC"""
        k, p = self.k, self.p
        return (k - 1) + k * p + k * p * (p + 1) // 2

    @cached_property
    def cholesky_factors(self) -> np.ndarray:
        """Lower Cholesky factor of every covariance, shape (K, p, p)"""
        try:
            return np.stack(
                [scipy.linalg.cholesky(c, lower=True) for c in self.covariances]
            )
        except scipy.linalg.LinAlgError as e:
            raise ValidationError(f"GMM covariance is not positive definite: {e}")

    @cached_property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def permute(self, order: Sequence[int]) -> "GmmModel":
        """
        Relabel components so that new component j is old component order[j]

        Args:
            order (Sequence[int]): A permutation of range(K)

        Returns:
            GmmModel: Model with reordered weights, means and covariances
        """
        order = np.asarray(order, dtype=int)
        if sorted(order.tolist()) != list(range(self.k)):
            raise ValidationError(f"Not a permutation of {self.k} labels: {order}")
        return GmmModel(
            weights=self.weights[order],
            means=self.means[order],
            covariances=self.covariances[order],
            log_likelihood=self.log_likelihood,
            n_iter=self.n_iter,
            converged=self.converged,
            trace=list(self.trace),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert the model to plain Python types"""
        return {
            "k": self.k,
            "p": self.p,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "log_likelihood": (
                None if np.isnan(self.log_likelihood) else self.log_likelihood
            ),
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GmmModel":
        log_likelihood = data.get("log_likelihood")
        return cls(
            weights=np.asarray(data["weights"], dtype=float),
            means=np.asarray(data["means"], dtype=float),
            covariances=np.asarray(data["covariances"], dtype=float),
            log_likelihood=float("nan") if log_likelihood is None else log_likelihood,
            n_iter=int(data.get("n_iter", 0)),
            converged=bool(data.get("converged", True)),
        )

    def __str__(self) -> str:
        return (
            f"GmmModel(k={self.k}, p={self.p}, "
            f"log_likelihood={self.log_likelihood:.4f})"
        )


@dataclass(frozen=True)
class BicSelection:
    """
    BIC table over candidate component counts

    Attributes:
        rows (List[Dict[str, Any]]): One row per candidate with keys k, bic,
            log_likelihood, n_parameters and error (None when the fit worked)
        suggested_k (int): Elbow suggestion
        threshold (float): Relative BIC improvement below which the elbow is set
    """

    rows: List[Dict[str, Any]]
    suggested_k: int
    threshold: float = 0.02

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [dict(row) for row in self.rows],
            "suggested_k": self.suggested_k,
            "threshold": self.threshold,
        }
