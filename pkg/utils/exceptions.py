class NoisyMoeError(Exception):
    """Base exception for the noisy mixture-of-experts library"""

    pass


class ValidationError(NoisyMoeError):
    """Exception raised when inputs or configuration violate a precondition"""

    pass


class ConfigError(ValidationError):
    """Exception raised for invalid run configuration (unknown keys, bad values)"""

    pass


class DataError(NoisyMoeError):
    """Exception raised for problems with user-supplied data or model files"""

    pass


class DimensionMismatch(DataError):
    """Exception raised when array shapes do not agree"""

    pass


class ParseError(DataError):
    """Exception raised when a CSV file cannot be parsed"""

    def __init__(self, message: str, row: int = None, column: str = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaMismatch(DataError):
    """Exception raised when two inputs disagree on their columns or schema"""

    pass


class ModelVersionMismatch(DataError):
    """Exception raised when a model file was written by a newer schema version"""

    pass


class NumericError(NoisyMoeError):
    """Exception raised when a numerical procedure cannot produce a result"""

    pass


class DegenerateComponent(NumericError):
    """Exception raised when a mixture component collapses and cannot be re-seeded"""

    pass


class TooFewPoints(NumericError):
    """Exception raised when a regression has fewer points than it needs"""

    pass


class SingularDesign(NumericError):
    """Exception raised when every elemental start of LTS is rank-deficient"""

    pass


class TooLarge(NumericError):
    """Exception raised when an exhaustive search would be too large"""

    pass


class UnsupportedFamily(NoisyMoeError):
    """Exception raised for error distributions without an estimator"""

    pass


class NonFinite(NumericError):
    """Exception raised when an iterate or gradient becomes non-finite"""

    pass


class EmptyCell(NumericError):
    """Exception raised when a diagnostic needs a cluster that received no points"""

    pass


class ZeroDenominator(NumericError):
    """Exception raised when a relative metric has a zero reference error"""

    pass


class ThinClusterWarning(UserWarning):
    """Warning issued when a cluster is too small for trimmed regression"""

    pass
