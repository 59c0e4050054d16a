"""Neural covariance estimation for random fields on multidimensional grids.

Covariance kernels are modeled as sum_{r,s} lambda_{r,s} g_r(u) g_s(v) with
PSD coefficients and neural-network constituents (shallow, deep, or
weight-shared deep).  Models are fitted to N x D field matrices through a
Gram-matrix loss that never forms a D x D object, eigendecomposed through an
R x R generalized eigenproblem, and compared against empirical and best
separable baselines by Monte-Carlo relative error.
"""

from .baselines import (
    DenseCovariance,
    SeparableCovariance,
    TrueKernel,
    ZeroCovariance,
    best_separable_2d,
    empirical_covariance,
    relative_error_mc,
)
from .crossval import CvReport, cross_validate, cv_loss
from .errors import (
    ConfigError,
    CovnetError,
    DegenerateModelError,
    DegenerateTruthError,
    FieldFormatError,
    ModelFormatError,
    NumericError,
    ResourceLimitError,
    TrainingDivergedError,
)
from .fields import (
    FieldMatrix,
    GramMatrix,
    Grid,
    cross_gram,
    inner_product,
    make_grid,
    read_fields,
    write_fields,
)
from .model import (
    Architecture,
    FittedCovariance,
    count_parameters,
    eval_constituents,
    fitted_fields,
    init_params,
    lambda_from_coefficients,
    load_model,
    save_model,
)
from .simulate import (
    BrownianSheet,
    IntegratedBrownianSheet,
    Matern,
    NoiseSpec,
    RotatedBrownianSheet,
    RotatedIntegratedBrownianSheet,
    kernel_eval,
    kernel_matrix,
    kernel_pairs,
    rotation_2d_45,
    rotation_3d_composed,
    sample_gaussian_fields,
)
from .spectral import (
    ConstituentGram,
    EigenSystem,
    constituent_gram,
    eigendecompose,
    eval_eigenfunction,
    threshold_lambda,
)
from .training import (
    AdamState,
    LossBreakdown,
    TrainConfig,
    adam_step,
    fit,
    gradients,
    loss,
    loss_with_mean,
)

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "AdamState",
    "BrownianSheet",
    "ConfigError",
    "ConstituentGram",
    "CovnetError",
    "CvReport",
    "DegenerateModelError",
    "DegenerateTruthError",
    "DenseCovariance",
    "EigenSystem",
    "FieldFormatError",
    "FieldMatrix",
    "FittedCovariance",
    "GramMatrix",
    "Grid",
    "IntegratedBrownianSheet",
    "LossBreakdown",
    "Matern",
    "ModelFormatError",
    "NoiseSpec",
    "NumericError",
    "ResourceLimitError",
    "RotatedBrownianSheet",
    "RotatedIntegratedBrownianSheet",
    "SeparableCovariance",
    "TrainConfig",
    "TrainingDivergedError",
    "TrueKernel",
    "ZeroCovariance",
    "adam_step",
    "best_separable_2d",
    "constituent_gram",
    "count_parameters",
    "cross_gram",
    "cross_validate",
    "cv_loss",
    "eigendecompose",
    "empirical_covariance",
    "eval_constituents",
    "eval_eigenfunction",
    "fit",
    "fitted_fields",
    "gradients",
    "init_params",
    "inner_product",
    "kernel_eval",
    "kernel_matrix",
    "kernel_pairs",
    "lambda_from_coefficients",
    "load_model",
    "loss",
    "loss_with_mean",
    "make_grid",
    "read_fields",
    "relative_error_mc",
    "rotation_2d_45",
    "rotation_3d_composed",
    "sample_gaussian_fields",
    "save_model",
    "threshold_lambda",
    "write_fields",
]
