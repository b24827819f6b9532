"""
Utilities Module
================

Exceptions, array validators and numeric helpers.
"""

from .exceptions import *
from .validators import ArrayValidator
from .helpers import LinearAlgebra, RandomStreams, configure_logging, ordered_map

__all__ = [
    # Exceptions
    "NoisyMoeError",
    "ValidationError",
    "ConfigError",
    "DataError",
    "DimensionMismatch",
    "ParseError",
    "SchemaMismatch",
    "ModelVersionMismatch",
    "NumericError",
    "DegenerateComponent",
    "TooFewPoints",
    "SingularDesign",
    "TooLarge",
    "UnsupportedFamily",
    "NonFinite",
    "EmptyCell",
    "ZeroDenominator",
    "ThinClusterWarning",
    # Validators
    "ArrayValidator",
    # Helpers
    "LinearAlgebra",
    "RandomStreams",
    "configure_logging",
    "ordered_map",
]
