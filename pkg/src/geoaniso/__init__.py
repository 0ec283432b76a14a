"""Estimation of geometric anisotropy in Matérn Gaussian random fields.

Three interchangeable estimators of (alpha, lambda, theta): exact maximum
likelihood, a CNN on raw 16 x 16 fields (NF) and a CNN on 13 x 13
semivariogram maps (NV).
"""

__version__ = "0.1.0"

from .covariance import (
    AnisotropyParams,
    MaternSpec,
    SiteGeometry,
    aniso_distance,
    anisotropy_matrix,
    correlation_matrix,
    covariance,
    matern,
    practical_range,
)
from .errors import (
    ChecksumError,
    CholeskyError,
    DomainError,
    GeoanisoError,
    ModelFormatError,
    SimulationError,
    TrainingDivergedError,
)
from .grids import FieldGrid, GridDomain, RasterGrid, read_grid_csv, rotate180, write_grid_csv
from .likelihood import (
    LikelihoodEval,
    MLResult,
    SearchConfig,
    aic,
    fit_ml,
    fit_ml_isotropic,
    log_likelihood,
    profile_loglik,
    profile_sigma2,
)
from .simulate import (
    LabeledSample,
    ParamGrid,
    generate_dataset,
    read_dataset,
    simulate_grf,
    training_param_grid,
    validation_param_grid,
    write_dataset,
)
from .variogram import VariogramMap, variogram_map, varmap_image

__all__ = [
    "AnisotropyParams",
    "ChecksumError",
    "CholeskyError",
    "DomainError",
    "FieldGrid",
    "GeoanisoError",
    "GridDomain",
    "LabeledSample",
    "LikelihoodEval",
    "MLResult",
    "MaternSpec",
    "ModelFormatError",
    "ParamGrid",
    "RasterGrid",
    "SearchConfig",
    "SimulationError",
    "SiteGeometry",
    "TrainingDivergedError",
    "VariogramMap",
    "aic",
    "aniso_distance",
    "anisotropy_matrix",
    "correlation_matrix",
    "covariance",
    "fit_ml",
    "fit_ml_isotropic",
    "generate_dataset",
    "log_likelihood",
    "matern",
    "practical_range",
    "profile_loglik",
    "profile_sigma2",
    "read_dataset",
    "read_grid_csv",
    "rotate180",
    "simulate_grf",
    "training_param_grid",
    "validation_param_grid",
    "variogram_map",
    "varmap_image",
    "write_dataset",
    "write_grid_csv",
]
