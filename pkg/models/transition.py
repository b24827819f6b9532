"""
Transition Data Models
======================

Latent-label transition matrix and the exponentiated-gradient problem it is
estimated from
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from utils.exceptions import ValidationError
from utils.validators import ArrayValidator

INIT_UNIFORM = "uniform"
INIT_DIAGONAL_HEAVY = "diagonal_heavy"


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """
    Column-stochastic K x K matrix, entry (k, k~) = P(Z = k | Z~ = k~)

    Attributes:
        pi (np.ndarray): Transition probabilities, columns sum to one
    """

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim == 0:
            pi = pi.reshape(1, 1)
        if not ArrayValidator.is_column_stochastic(pi):
            raise ValidationError(
                "Transition matrix must be square, nonnegative and column-stochastic"
            )
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def k(self) -> int:
        return int(self.pi.shape[0])

    @classmethod
    def identity(cls, k: int) -> "TransitionMatrix":
        return cls(np.eye(k))

    @classmethod
    def uniform(cls, k: int) -> "TransitionMatrix":
        return cls(np.full((k, k), 1.0 / k))

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "pi": self.pi.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TransitionMatrix":
        return cls(np.asarray(data["pi"], dtype=float))


@dataclass(frozen=True)
class EgConfig:
    """
    Settings for the exponentiated-gradient solver

    Attributes:
        step (float): Step size s applied to the gradient scaled by 1/n
        max_iter (int): Iteration cap
        tol (float, optional): Absolute objective change that stops the
            iterations; None means 1e-9 * n
        init (str): "uniform" or "diagonal_heavy"
        rho (float): Diagonal mass of the diagonal-heavy start
        density_floor (float): Lower bound on each observation's likelihood
    """

    step: float = 0.5
    max_iter: int = 2000
    tol: Optional[float] = None
    init: str = INIT_DIAGONAL_HEAVY
    rho: float = 0.7
    density_floor: float = 1e-300

    def __post_init__(self):
        ArrayValidator.require(self.step > 0, "step must be > 0")
        ArrayValidator.require(self.max_iter >= 1, "max_iter must be >= 1")
        ArrayValidator.require(self.tol is None or self.tol > 0, "tol must be > 0")
        ArrayValidator.require(self.density_floor > 0, "density_floor must be > 0")
        ArrayValidator.require(
            self.init in (INIT_UNIFORM, INIT_DIAGONAL_HEAVY),
            f"init must be '{INIT_UNIFORM}' or '{INIT_DIAGONAL_HEAVY}'",
        )
        ArrayValidator.require(0.0 < self.rho <= 1.0, "rho must be in (0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "init": self.init,
            "rho": self.rho,
            "density_floor": self.density_floor,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EgConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValidationError(f"Unknown EG settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class EgProblem:
    """
    Per-observation factors of the transition negative log-likelihood

    Attributes:
        gate_post (np.ndarray): n x K, row i = P(Z~_i = . | X_i)
        expert_dens (np.ndarray): n x K, entry (i, k) = density of the
            residual of observation i under expert k
    """

    gate_post: np.ndarray
    expert_dens: np.ndarray

    def __post_init__(self):
        gate_post = np.asarray(self.gate_post, dtype=float)
        expert_dens = np.asarray(self.expert_dens, dtype=float)
        if gate_post.ndim != 2 or gate_post.shape != expert_dens.shape:
            raise ValidationError(
                f"gate_post {gate_post.shape} and expert_dens "
                f"{expert_dens.shape} must be matching n x K matrices"
            )
        if np.any(gate_post < 0) or np.any(
            np.abs(gate_post.sum(axis=1) - 1.0) > 1e-9
        ):
            raise ValidationError("gate_post rows must be probability vectors")
        if not np.all(np.isfinite(expert_dens)) or np.any(expert_dens < 0):
            raise ValidationError("expert_dens must be finite and nonnegative")
        object.__setattr__(self, "gate_post", gate_post)
        object.__setattr__(self, "expert_dens", expert_dens)

    @property
    def n(self) -> int:
        return int(self.gate_post.shape[0])

    @property
    def k(self) -> int:
        return int(self.gate_post.shape[1])


@dataclass(frozen=True)
class EgResult:
    """
    Outcome of the exponentiated-gradient solver

    Attributes:
        transition (TransitionMatrix): Final iterate
        trace (List[float]): Objective at the start and after every accepted step
        n_iter (int): Iterations performed, rejected steps included
        converged (bool): Whether the objective change fell below tol
        step (float): Step size in force at the end
    """

    transition: TransitionMatrix
    trace: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    step: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_iter": self.n_iter,
            "converged": self.converged,
            "step": self.step,
            "initial_objective": self.trace[0] if self.trace else None,
            "final_objective": self.trace[-1] if self.trace else None,
        }
