"""Exception hierarchy shared across the toolkit."""


class GeoanisoError(Exception):
    """Base class for all toolkit failures (CLI maps these to exit code 2)."""


class DomainError(GeoanisoError, ValueError):
    """A parameter or input lies outside its admissible domain."""


class CholeskyError(GeoanisoError, ArithmeticError):
    """A covariance matrix could not be factorized even after jitter."""


class SimulationError(GeoanisoError):
    """Field simulation failed for a specific configuration."""


class TrainingDivergedError(GeoanisoError):
    """Training loss became non-finite."""


class ModelFormatError(GeoanisoError):
    """A model file has the wrong magic bytes, version or layout."""


class ChecksumError(ModelFormatError):
    """A model file is truncated or corrupted."""
