"""
Model Persistence
=================

Versioned JSON documents for every fitted model kind, and prediction
dispatch over those kinds
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from core.baselines import predict_moe, predict_moess
from core.moe import predict_many
from core.simbench import true_conditional_mean
from models.mixture import GateKind, MoeModel, MoessModel, NoisyMoeModel
from models.simulation import TruthModel
from utils.exceptions import (
    DataError,
    ModelVersionMismatch,
    SchemaMismatch,
    ValidationError,
)

logger = logging.getLogger(__name__)

SCHEMA = "noisy-moe-model"
SCHEMA_VERSION = 1

KIND_NOISYSS = "noisyss"
KIND_MOESS = "moess"
KIND_MOELINE = "moeline"
KIND_MOEQUAD = "moequad"
KIND_TRUTH = "truth"

AnyModel = Union[NoisyMoeModel, MoessModel, MoeModel, TruthModel]

_LOADERS = {
    KIND_NOISYSS: NoisyMoeModel.from_dict,
    KIND_MOESS: MoessModel.from_dict,
    KIND_MOELINE: MoeModel.from_dict,
    KIND_MOEQUAD: MoeModel.from_dict,
    KIND_TRUTH: TruthModel.from_dict,
}


def model_kind(model: AnyModel) -> str:
    """Schema kind tag of a model instance"""
    if isinstance(model, NoisyMoeModel):
        return KIND_NOISYSS
    if isinstance(model, MoessModel):
        return KIND_MOESS
    if isinstance(model, MoeModel):
        return KIND_MOELINE if model.gate_kind is GateKind.LINEAR else KIND_MOEQUAD
    if isinstance(model, TruthModel):
        return KIND_TRUTH
    raise ValidationError(f"Cannot serialize {type(model).__name__}")


def predict_model(model: AnyModel, x: np.ndarray) -> np.ndarray:
    """Predictions of any supported model kind for every row of x"""
    kind = model_kind(model)
    if kind == KIND_NOISYSS:
        return predict_many(model, x)
    if kind == KIND_MOESS:
        return predict_moess(model, x)
    if kind == KIND_TRUTH:
        return true_conditional_mean(model, x)
    return predict_moe(model, x)


def model_to_document(
    model: AnyModel,
    covariate_names: Optional[List[str]] = None,
    response_name: Optional[str] = None,
) -> Dict[str, Any]:
    p = model.p
    if covariate_names is None:
        covariate_names = [f"x{i + 1}" for i in range(p)]
    if len(covariate_names) != p:
        raise ValidationError(
            f"{len(covariate_names)} covariate names for a model with p={p}"
        )
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "kind": model_kind(model),
        "covariates": list(covariate_names),
        "response": response_name or "y",
        "model": model.to_dict(),
    }


def document_to_model(document: Dict[str, Any]) -> Tuple[AnyModel, Dict[str, Any]]:
    """
    Rebuild a model from its document

    Returns:
        Tuple[AnyModel, Dict[str, Any]]: Model and metadata (kind,
            covariates, response)

    Raises:
        SchemaMismatch: If the document is not a model document
        ModelVersionMismatch: If it was written by a newer schema version
    """
    if not isinstance(document, dict) or document.get("schema") != SCHEMA:
        raise SchemaMismatch(f"Not a {SCHEMA} document")
    version = document.get("version")
    if not isinstance(version, int) or version > SCHEMA_VERSION:
        raise ModelVersionMismatch(
            f"Model schema version {version} is newer than supported {SCHEMA_VERSION}"
        )
    kind = document.get("kind")
    if kind not in _LOADERS:
        raise SchemaMismatch(f"Unknown model kind: {kind}")
    try:
        model = _LOADERS[kind](document["model"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed {kind} model document: {e}") from e
    metadata = {
        "kind": kind,
        "covariates": list(document.get("covariates", [])),
        "response": document.get("response", "y"),
    }
    return model, metadata


def save_model(
    model: AnyModel,
    path: Union[str, Path],
    covariate_names: Optional[List[str]] = None,
    response_name: Optional[str] = None,
) -> None:
    """Write a model document; floats keep full round-trip precision"""
    document = model_to_document(model, covariate_names, response_name)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, allow_nan=False)
    logger.info(f"Saved {document['kind']} model to {path}")


def load_model(path: Union[str, Path]) -> Tuple[AnyModel, Dict[str, Any]]:
    """
    Read a model document

    Raises:
        DataError: If the file cannot be read or parsed
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise DataError(f"Cannot read model file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"Model file {path} is not valid JSON: {e}") from e
    return document_to_model(document)
