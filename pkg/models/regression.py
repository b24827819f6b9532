"""
Regression Data Models
======================

Least-trimmed-squares configuration and fits, and the per-expert linear model
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np

from utils.exceptions import UnsupportedFamily, ValidationError
from utils.validators import ArrayValidator


class ErrorFamily(Enum):
    """Error distributions an expert may carry"""

    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "ErrorFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise UnsupportedFamily(f"Unsupported error family: {value}")


@dataclass(frozen=True)
class LtsConfig:
    """
    Settings for the FAST-LTS search

    Attributes:
        alpha (float): Retaining fraction in [0.5, 1]
        n_starts (int): Random elemental starts
        n_keep (int): Best starts refined until their C-steps converge
        max_csteps (int): C-step cap during refinement
        seed (int): Seed of the per-start random streams
        exhaustive (bool): Enumerate every retained subset instead of searching
        n_jobs (int): Threads used to run starts
    """

    alpha: float = 0.5
    n_starts: int = 500
    n_keep: int = 10
    max_csteps: int = 50
    seed: int = 0
    exhaustive: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        ArrayValidator.require(
            0.5 <= self.alpha <= 1.0, f"alpha must be in [0.5, 1], got {self.alpha}"
        )
        ArrayValidator.require(self.n_starts >= 1, "n_starts must be >= 1")
        ArrayValidator.require(
            1 <= self.n_keep <= self.n_starts, "n_keep must be in [1, n_starts]"
        )
        ArrayValidator.require(self.max_csteps >= 1, "max_csteps must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "n_starts": self.n_starts,
            "n_keep": self.n_keep,
            "max_csteps": self.max_csteps,
            "seed": self.seed,
            "exhaustive": self.exhaustive,
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LtsConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValidationError(f"Unknown LTS settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class LtsFit:
    """
    Result of a least-trimmed-squares regression

    Attributes:
        beta0 (float): Intercept
        beta (np.ndarray): Slopes, shape (p,)
        retained (Tuple[int, ...]): Sorted indices of the retained points
        h (int): Retained count
        objective (float): Trimmed residual sum of squares over (h - p - 1)
        converged (bool): Whether the final C-steps reached a fixed point
    """

    beta0: float
    beta: np.ndarray
    retained: Tuple[int, ...]
    h: int
    objective: float
    converged: bool = True

    @property
    def p(self) -> int:
        return int(np.asarray(self.beta).shape[0])

    @property
    def retained_indices(self) -> np.ndarray:
        return np.asarray(self.retained, dtype=int)

    def residuals(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return y - self.beta0 - x @ self.beta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta0": self.beta0,
            "beta": np.asarray(self.beta).tolist(),
            "retained": list(self.retained),
            "h": self.h,
            "objective": self.objective,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class ExpertModel:
    """
    Linear expert Y = beta0 + beta^T X + error

    Attributes:
        beta0 (float): Intercept
        beta (np.ndarray): Slopes, shape (p,)
        error_family (ErrorFamily): Error distribution
        theta (Dict[str, float]): Error parameters ("sigma" for Gaussian)
    """

    beta0: float
    beta: np.ndarray
    error_family: ErrorFamily = ErrorFamily.GAUSSIAN
    theta: Dict[str, float] = field(default_factory=lambda: {"sigma": 1.0})

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(beta)) or not np.isfinite(self.beta0):
            raise ValidationError("Expert coefficients must be finite")
        if self.theta.get("sigma", 0.0) < 0:
            raise ValidationError("Expert sigma must be >= 0")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "error_family", ErrorFamily.parse(self.error_family))

    @property
    def sigma(self) -> float:
        return float(self.theta["sigma"])

    @property
    def coefficients(self) -> np.ndarray:
        """(beta0, beta^T)^T as one vector"""
        return np.concatenate([[self.beta0], self.beta])

    def mean(self, x: np.ndarray) -> np.ndarray:
        """Expert mean for each row of x (or a single covariate vector)"""
        return self.beta0 + np.asarray(x, dtype=float) @ self.beta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta0": self.beta0,
            "beta": self.beta.tolist(),
            "error_family": self.error_family.value,
            "theta": {key: float(v) for key, v in self.theta.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExpertModel":
        return cls(
            beta0=data["beta0"],
            beta=np.asarray(data["beta"], dtype=float),
            error_family=ErrorFamily.parse(data.get("error_family", "gaussian")),
            theta=dict(data.get("theta", {"sigma": 1.0})),
        )
