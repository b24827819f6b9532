"""
Mixture-of-Experts Data Models
==============================

The noisy mixture of experts and the two baseline model families, with the
configurations used to fit them
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from models.gmm_model import GmmFitConfig, GmmModel
from models.regression import ErrorFamily, ExpertModel, LtsConfig
from models.transition import EgConfig, TransitionMatrix
from utils.exceptions import ValidationError
from utils.validators import ArrayValidator

POOL_ALL = "all"
POOL_UNLABELED = "unlabeled-only"


class GateKind(Enum):
    """Softmax gate families of the supervised mixture of experts"""

    LINEAR = "linear"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class NoisyMoeConfig:
    """
    Settings for the semi-supervised noisy mixture-of-experts fit

    Attributes:
        alpha (float): Retaining fraction of the trimmed regressions
        gmm (GmmFitConfig): Mixture fit settings (its k is overridden by the
            k passed to the fit)
        lts (LtsConfig): Trimmed-regression settings (its alpha is overridden
            by alpha)
        eg (EgConfig): Transition solver settings
        gmm_pool (str): "all" fits the mixture on labeled and unlabeled
            covariates, "unlabeled-only" on unlabeled covariates alone
        error_family (ErrorFamily): Expert error distribution
        screen_radius (float, optional): Drop labeled points with ||x|| > radius
            before clustering; None keeps every point
        n_jobs (int): Threads used for per-cluster regressions
    """

    alpha: float = 0.5
    gmm: GmmFitConfig = field(default_factory=GmmFitConfig)
    lts: LtsConfig = field(default_factory=LtsConfig)
    eg: EgConfig = field(default_factory=EgConfig)
    gmm_pool: str = POOL_ALL
    error_family: ErrorFamily = ErrorFamily.GAUSSIAN
    screen_radius: Optional[float] = None
    n_jobs: int = 1

    def __post_init__(self):
        ArrayValidator.require(
            0.5 <= self.alpha <= 1.0, f"alpha must be in [0.5, 1], got {self.alpha}"
        )
        ArrayValidator.require(
            self.gmm_pool in (POOL_ALL, POOL_UNLABELED),
            f"gmm_pool must be '{POOL_ALL}' or '{POOL_UNLABELED}'",
        )
        ArrayValidator.require(
            self.screen_radius is None or self.screen_radius > 0,
            "screen_radius must be > 0",
        )
        object.__setattr__(self, "error_family", ErrorFamily.parse(self.error_family))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "gmm": self.gmm.to_dict(),
            "lts": self.lts.to_dict(),
            "eg": self.eg.to_dict(),
            "gmm_pool": self.gmm_pool,
            "error_family": self.error_family.value,
            "screen_radius": self.screen_radius,
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoisyMoeConfig":
        data = dict(data)
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValidationError(f"Unknown noisy MoE settings: {sorted(unknown)}")
        if "gmm" in data:
            data["gmm"] = GmmFitConfig.from_dict(data["gmm"])
        if "lts" in data:
            data["lts"] = LtsConfig.from_dict(data["lts"])
        if "eg" in data:
            data["eg"] = EgConfig.from_dict(data["eg"])
        return cls(**data)


@dataclass(frozen=True)
class FitDiagnostics:
    """
    Bookkeeping recorded while fitting a clustered estimator

    Attributes:
        cluster_sizes (List[int]): Labeled count |I_k| per cluster
        retained_counts (List[int]): Points kept by each expert regression
        thin_clusters (List[int]): Clusters fitted by the untrimmed fallback
        empty_clusters (List[int]): Clusters that copied the global fit
        sigma_floored (List[int]): Experts whose sigma hit the floor
        screened_out (int): Labeled points dropped by the radius screen
        lts_objectives (List[Optional[float]]): Trimmed objective per cluster
        eg (Dict[str, Any]): Transition solver summary
        eg_trace (List[float]): Transition objective trace
    """

    cluster_sizes: List[int] = field(default_factory=list)
    retained_counts: List[int] = field(default_factory=list)
    thin_clusters: List[int] = field(default_factory=list)
    empty_clusters: List[int] = field(default_factory=list)
    sigma_floored: List[int] = field(default_factory=list)
    screened_out: int = 0
    lts_objectives: List[Optional[float]] = field(default_factory=list)
    eg: Dict[str, Any] = field(default_factory=dict)
    eg_trace: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cluster_sizes": list(self.cluster_sizes),
            "retained_counts": list(self.retained_counts),
            "thin_clusters": list(self.thin_clusters),
            "empty_clusters": list(self.empty_clusters),
            "sigma_floored": list(self.sigma_floored),
            "screened_out": self.screened_out,
            "lts_objectives": list(self.lts_objectives),
            "eg": dict(self.eg),
            "eg_trace": list(self.eg_trace),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitDiagnostics":
        return cls(**{key: data[key] for key in cls().to_dict() if key in data})


@dataclass(frozen=True, eq=False)
class NoisyMoeModel:
    """
    Semi-supervised noisy mixture of experts

    Attributes:
        gmm (GmmModel): Mixture for X given the unsupervised label
        experts (List[ExpertModel]): One linear expert per supervised label
        transition (TransitionMatrix): P(Z = k | Z~ = k~)
        alpha_used (float): Retaining fraction used by the expert fits
        diagnostics (FitDiagnostics): Cluster sizes, retained counts, traces
    """

    gmm: GmmModel
    experts: List[ExpertModel]
    transition: TransitionMatrix
    alpha_used: float = 0.5
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)

    def __post_init__(self):
        if not (self.gmm.k == len(self.experts) == self.transition.k):
            raise ValidationError(
                f"GMM has {self.gmm.k} components, {len(self.experts)} experts "
                f"and a {self.transition.k}x{self.transition.k} transition"
            )
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
            "alpha_used": self.alpha_used,
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoisyMoeModel":
        return cls(
            gmm=GmmModel.from_dict(data["gmm"]),
            experts=[ExpertModel.from_dict(e) for e in data["experts"]],
            transition=TransitionMatrix.from_dict(data["transition"]),
            alpha_used=float(data.get("alpha_used", 0.5)),
            diagnostics=FitDiagnostics.from_dict(data.get("diagnostics", {})),
        )

    def __str__(self) -> str:
        return f"NoisyMoeModel(k={self.k}, p={self.p}, alpha={self.alpha_used})"


@dataclass(frozen=True, eq=False)
class MoessModel:
    """
    Semi-supervised mixture of experts with one untrimmed expert per cluster

    Attributes:
        gmm (GmmModel): Mixture for X
        experts (List[ExpertModel]): Per-cluster least-squares experts
        diagnostics (FitDiagnostics): Cluster sizes and fallbacks
    """

    gmm: GmmModel
    experts: List[ExpertModel]
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)

    def __post_init__(self):
        if self.gmm.k != len(self.experts):
            raise ValidationError(
                f"GMM has {self.gmm.k} components but {len(self.experts)} experts"
            )
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
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MoessModel":
        return cls(
            gmm=GmmModel.from_dict(data["gmm"]),
            experts=[ExpertModel.from_dict(e) for e in data["experts"]],
            diagnostics=FitDiagnostics.from_dict(data.get("diagnostics", {})),
        )


@dataclass(frozen=True)
class MoeEmConfig:
    """
    Settings for fitting the supervised mixture of experts by EM

    Attributes:
        max_iter (int): EM iteration cap per restart
        tol (float): Relative log-likelihood change that stops EM
        n_restarts (int): Independent k-means initialisations
        irls_iter (int): Newton iterations per gate M-step
        ridge (float): Ridge added to the gate Hessian
        sigma_floor_rel (float): Sigma floor relative to the response sd
        seed (int): Seed of the per-restart random streams
        n_jobs (int): Threads used to run restarts
    """

    max_iter: int = 1000
    tol: float = 1e-8
    n_restarts: int = 5
    irls_iter: int = 25
    ridge: float = 1e-8
    sigma_floor_rel: float = 1e-6
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        ArrayValidator.require(self.max_iter >= 1, "max_iter must be >= 1")
        ArrayValidator.require(self.tol > 0, "tol must be > 0")
        ArrayValidator.require(self.n_restarts >= 1, "n_restarts must be >= 1")
        ArrayValidator.require(self.irls_iter >= 1, "irls_iter must be >= 1")
        ArrayValidator.require(self.ridge >= 0, "ridge must be >= 0")
        ArrayValidator.require(self.sigma_floor_rel > 0, "sigma_floor_rel must be > 0")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_iter": self.max_iter,
            "tol": self.tol,
            "n_restarts": self.n_restarts,
            "irls_iter": self.irls_iter,
            "ridge": self.ridge,
            "sigma_floor_rel": self.sigma_floor_rel,
            "seed": self.seed,
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MoeEmConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValidationError(f"Unknown MoE EM settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class MoeModel:
    """
    Supervised mixture of experts with a softmax gate

    Attributes:
        gate_kind (GateKind): Linear or quadratic gate features
        gate_params (np.ndarray): K x d gate coefficients over the gate
            features (intercept, linear terms, then upper-triangular squares
            and cross terms for the quadratic gate); row 0 is pinned to zero
        experts (List[ExpertModel]): Gaussian linear experts
        log_likelihood (float): Observed-data log-likelihood of the kept restart
        trace (List[float]): Log-likelihood after every EM iteration
        sigma_floored (bool): Whether any sigma hit the floor
    """

    gate_kind: GateKind
    gate_params: np.ndarray
    experts: List[ExpertModel]
    log_likelihood: float = float("nan")
    trace: List[float] = field(default_factory=list)
    sigma_floored: bool = False

    def __post_init__(self):
        gate_params = np.asarray(self.gate_params, dtype=float)
        kind = self.gate_kind
        if not isinstance(kind, GateKind):
            kind = GateKind(str(kind).lower())
        if gate_params.ndim != 2 or gate_params.shape[0] != len(self.experts):
            raise ValidationError(
                f"gate_params must have one row per expert, got {gate_params.shape}"
            )
        if np.any(gate_params[0] != 0.0):
            raise ValidationError("Gate parameters of component 0 must be zero")
        object.__setattr__(self, "gate_kind", kind)
        object.__setattr__(self, "gate_params", gate_params)
        object.__setattr__(self, "experts", list(self.experts))

    @property
    def k(self) -> int:
        return len(self.experts)

    @property
    def p(self) -> int:
        return int(self.experts[0].beta.shape[0])

    @property
    def alpha0(self) -> np.ndarray:
        """Gate intercepts, shape (K,)"""
        return self.gate_params[:, 0]

    @property
    def alpha(self) -> np.ndarray:
        """Gate linear coefficients, shape (K, p)"""
        return self.gate_params[:, 1 : 1 + self.p]

    @property
    def gamma(self) -> np.ndarray:
        """Upper-triangular quadratic coefficients, shape (K, p, p)"""
        p = self.p
        out = np.zeros((self.k, p, p))
        if self.gate_kind is GateKind.QUADRATIC:
            rows, cols = np.triu_indices(p)
            out[:, rows, cols] = self.gate_params[:, 1 + p :]
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gate_kind": self.gate_kind.value,
            "gate_params": self.gate_params.tolist(),
            "experts": [expert.to_dict() for expert in self.experts],
            "log_likelihood": (
                None if np.isnan(self.log_likelihood) else self.log_likelihood
            ),
            "sigma_floored": self.sigma_floored,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MoeModel":
        log_likelihood = data.get("log_likelihood")
        return cls(
            gate_kind=GateKind(data["gate_kind"]),
            gate_params=np.asarray(data["gate_params"], dtype=float),
            experts=[ExpertModel.from_dict(e) for e in data["experts"]],
            log_likelihood=float("nan") if log_likelihood is None else log_likelihood,
            sigma_floored=bool(data.get("sigma_floored", False)),
        )
