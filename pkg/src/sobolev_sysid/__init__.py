"""Identification of nonlinear regression models from function and derivative data.

Models are linear combinations of basis functions fitted so that both the
function samples and (measured or estimated) gradient samples are matched.
The package also provides pointwise uncertainty envelopes, gradient
estimation from scattered data and NARX multi-step prediction tools.
"""

__version__ = "0.1.0"

from .basis import BasisSet, Gaussian, Monomial, Trigonometric, eval_basis, eval_basis_derivative, monomial_basis
from .data import Dataset, RegressionMatrices, build_regression_matrices, read_csv, rescale, write_csv
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    InfeasibleError,
    MissingChannelError,
    NumericalError,
    RankDeficientError,
    SysIdError,
)
from .identify import (
    Model,
    NoiseBounds,
    check_ffs_membership,
    eval_model,
    eval_model_derivative,
    identify_method1,
    identify_method2,
)
from .solver import SolveReport, SolverConfig, solve_constrained_minnorm, solve_regularized

__all__ = [
    "BasisSet", "Gaussian", "Monomial", "Trigonometric", "eval_basis", "eval_basis_derivative", "monomial_basis",
    "Dataset", "RegressionMatrices", "build_regression_matrices", "read_csv", "rescale", "write_csv",
    "ConfigError", "ConvergenceError", "DimensionError", "InfeasibleError", "MissingChannelError",
    "NumericalError", "RankDeficientError", "SysIdError",
    "Model", "NoiseBounds", "check_ffs_membership", "eval_model", "eval_model_derivative",
    "identify_method1", "identify_method2",
    "SolveReport", "SolverConfig", "solve_constrained_minnorm", "solve_regularized",
]
