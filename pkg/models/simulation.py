"""
Simulation Data Models
======================

Generator settings, the true model a simulated data set is drawn from, the
drawn sample, and one benchmark record per replication and method
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.gmm_model import GmmModel
from models.regression import ExpertModel
from models.transition import TransitionMatrix
from utils.exceptions import ValidationError
from utils.validators import ArrayValidator

RULE_GRID = "grid"
RULE_RANDOM = "random"


@dataclass(frozen=True)
class SimulationConfig:
    """
    Settings of the synthetic noisy mixture-of-experts generator

    Attributes:
        k (int): Number of clusters and experts
        p (int): Covariate dimension
        n_labeled (int): Labeled sample size n
        n_test (int): Test sample size
        n_unlabeled (int): Unlabeled sample size when oracle_x is off
        p0 (float): Diagonal of the corruption transition matrix
        oracle_x (bool): Use the true mixture instead of fitting one
        seed (int): Base seed
        mu_rule (str): "grid" spaces mean entries evenly on [-3, 3],
            "random" draws them from U[-3, 3]
        beta_rule (str): "grid" spaces coefficient entries evenly on [-1, 1],
            "random" draws them from U[-1, 1]
        sigma (float): Expert noise standard deviation
        d_range (Tuple[float, float]): Range of the covariance eigenvalues
        tilde_z_weights (List[float], optional): Cluster probabilities;
            None means uniform
    """

    k: int = 10
    p: int = 3
    n_labeled: int = 2000
    n_test: int = 20000
    n_unlabeled: int = 10000
    p0: float = 0.8
    oracle_x: bool = True
    seed: int = 0
    mu_rule: str = RULE_GRID
    beta_rule: str = RULE_GRID
    sigma: float = 0.1
    d_range: Tuple[float, float] = (0.005, 0.05)
    tilde_z_weights: Optional[List[float]] = None

    def __post_init__(self):
        ArrayValidator.require(self.k >= 1, "k must be >= 1")
        ArrayValidator.require(self.p >= 1, "p must be >= 1")
        ArrayValidator.require(self.n_labeled >= 1, "n_labeled must be >= 1")
        ArrayValidator.require(self.n_test >= 1, "n_test must be >= 1")
        ArrayValidator.require(self.n_unlabeled >= 0, "n_unlabeled must be >= 0")
        ArrayValidator.require(0.0 <= self.p0 <= 1.0, "p0 must be in [0, 1]")
        ArrayValidator.require(self.sigma > 0, "sigma must be > 0")
        ArrayValidator.require(
            self.mu_rule in (RULE_GRID, RULE_RANDOM)
            and self.beta_rule in (RULE_GRID, RULE_RANDOM),
            f"parameter rules must be '{RULE_GRID}' or '{RULE_RANDOM}'",
        )
        low, high = self.d_range
        ArrayValidator.require(0 < low <= high, "d_range must be positive and ordered")
        object.__setattr__(self, "d_range", (float(low), float(high)))

        if self.tilde_z_weights is not None:
            weights = [float(w) for w in self.tilde_z_weights]
            ArrayValidator.require(
                len(weights) == self.k
                and ArrayValidator.is_probability_vector(np.asarray(weights)),
                "tilde_z_weights must be k probabilities summing to 1",
            )
            object.__setattr__(self, "tilde_z_weights", weights)

    @property
    def weights(self) -> np.ndarray:
        if self.tilde_z_weights is None:
            return np.full(self.k, 1.0 / self.k)
        return np.asarray(self.tilde_z_weights)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "p": self.p,
            "n_labeled": self.n_labeled,
            "n_test": self.n_test,
            "n_unlabeled": self.n_unlabeled,
            "p0": self.p0,
            "oracle_x": self.oracle_x,
            "seed": self.seed,
            "mu_rule": self.mu_rule,
            "beta_rule": self.beta_rule,
            "sigma": self.sigma,
            "d_range": list(self.d_range),
            "tilde_z_weights": self.tilde_z_weights,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimulationConfig":
        data = dict(data)
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValidationError(f"Unknown simulation settings: {sorted(unknown)}")
        if "d_range" in data:
            data["d_range"] = tuple(data["d_range"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class TruthModel:
    """
    Data-generating noisy mixture of experts

    Attributes:
        gmm (GmmModel): True distribution of X given the cluster label
        experts (List[ExpertModel]): True experts
        transition (TransitionMatrix): True P(Z | Z~)
    """

    gmm: GmmModel
    experts: List[ExpertModel]
    transition: TransitionMatrix

    def __post_init__(self):
        if not (self.gmm.k == len(self.experts) == self.transition.k):
            raise ValidationError("Truth components, experts and transition disagree")
        object.__setattr__(self, "experts", list(self.experts))

    @property
    def k(self) -> int:
        return self.gmm.k

    @property
    def p(self) -> int:
        return self.gmm.p

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gmm": self.gmm.to_dict(),
            "experts": [expert.to_dict() for expert in self.experts],
            "transition": self.transition.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TruthModel":
        return cls(
            gmm=GmmModel.from_dict(data["gmm"]),
            experts=[ExpertModel.from_dict(e) for e in data["experts"]],
            transition=TransitionMatrix.from_dict(data["transition"]),
        )


@dataclass(frozen=True, eq=False)
class SampleDraw:
    """
    Simulated observations with their latent labels

    Attributes:
        x (np.ndarray): Covariates, shape (n, p)
        y (np.ndarray): Responses, shape (n,)
        z (np.ndarray): Supervised latent labels
        tilde_z (np.ndarray): Unsupervised latent labels
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    tilde_z: np.ndarray

    @property
    def n(self) -> int:
        return int(self.y.shape[0])


@dataclass
class ReplicationReport:
    """
    Metrics of one method on one benchmark replication

    Attributes:
        grid_kind (str): "p0" or "n"
        grid_value (float): Grid value of this replication
        replication (int): Replication index
        seed (int): Base seed of the run. Together with replication it fixes
            every draw of the row: truth, samples and method seeds come from
            the random streams [seed, replication, stream], with replication 0
            for the truth when it is frozen
        method (str): Estimator name
        n_labeled (int): Labeled sample size
        corruption (float): Corruption level in percent
        mse (float): Hungarian-matched coefficient error
        rpe (float): Relative prediction error on the test sample
        status (str): "ok" or "failed"
        error (str): Failure message, empty on success
        elapsed (float): Wall-clock seconds spent fitting and scoring
    """

    grid_kind: str
    grid_value: float
    replication: int
    seed: int
    method: str
    n_labeled: int
    corruption: float
    mse: float = float("nan")
    rpe: float = float("nan")
    status: str = "ok"
    error: str = ""
    elapsed: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = {
            "grid_kind": self.grid_kind,
            "grid_value": self.grid_value,
            "replication": self.replication,
            "seed": self.seed,
            "method": self.method,
            "n_labeled": self.n_labeled,
            "corruption": self.corruption,
            "mse": self.mse,
            "rpe": self.rpe,
            "status": self.status,
            "error": self.error,
        }
        if include_timing:
            data["elapsed"] = self.elapsed
        return data


@dataclass
class HoldoutReport:
    """
    Test error of one method on one random train/test split of a data set

    Attributes:
        n_train (int): Labeled training size
        replication (int): Split index
        seed (int): Base seed of the run
        method (str): Estimator name
        pe (float): Mean squared error on the held-out rows
        status (str): "ok" or "failed"
        error (str): Failure message, empty on success
    """

    n_train: int
    replication: int
    seed: int
    method: str
    pe: float = float("nan")
    status: str = "ok"
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_train": self.n_train,
            "replication": self.replication,
            "seed": self.seed,
            "method": self.method,
            "pe": self.pe,
            "status": self.status,
            "error": self.error,
        }
