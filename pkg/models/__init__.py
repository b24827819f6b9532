"""
Data Models Module
==================

Immutable domain types: mixtures, experts, transition matrices, fitted
estimators and simulation records.
"""

from .gmm_model import BicSelection, GmmFitConfig, GmmModel
from .regression import ErrorFamily, ExpertModel, LtsConfig, LtsFit
from .transition import EgConfig, EgProblem, EgResult, TransitionMatrix
from .mixture import (
    FitDiagnostics,
    GateKind,
    MoeEmConfig,
    MoeModel,
    MoessModel,
    NoisyMoeConfig,
    NoisyMoeModel,
)
from .simulation import (
    HoldoutReport,
    ReplicationReport,
    SampleDraw,
    SimulationConfig,
    TruthModel,
)

__all__ = [
    "BicSelection",
    "GmmFitConfig",
    "GmmModel",
    "ErrorFamily",
    "ExpertModel",
    "LtsConfig",
    "LtsFit",
    "EgConfig",
    "EgProblem",
    "EgResult",
    "TransitionMatrix",
    "FitDiagnostics",
    "GateKind",
    "MoeEmConfig",
    "MoeModel",
    "MoessModel",
    "NoisyMoeConfig",
    "NoisyMoeModel",
    "HoldoutReport",
    "ReplicationReport",
    "SampleDraw",
    "SimulationConfig",
    "TruthModel",
]
