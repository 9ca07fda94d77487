"""Sparse linear ODE systems for exponential-family time series."""
from .basis import BasisSystem, bspline_basis, eval_basis, integrate, make_bspline_basis
from .collocation import fit_grade, fit_vanilla, smooth_processes
from .estimators import SparseLinearODE
from .exceptions import (ConvergenceFailure, DomainError, FitFailure, InvalidConfigurationError,
                         InvalidDataError, NumericError, SparseODEError)
from .expfam import Bernoulli, Gaussian, Poisson, cumulant, get_family, neg_loglik
from .model import ObservationSet, ProcessFit, StructuralParams
from .penalties import Penalty, lasso, scad
from .profiling import PlateauWarning, TuningConfig, fit_hdgp
from .results import FitResult

__all__ = [
    "BasisSystem", "bspline_basis", "eval_basis", "integrate", "make_bspline_basis",
    "fit_grade", "fit_vanilla", "smooth_processes", "SparseLinearODE",
    "ConvergenceFailure", "DomainError", "FitFailure", "InvalidConfigurationError",
    "InvalidDataError", "NumericError", "SparseODEError",
    "Bernoulli", "Gaussian", "Poisson", "cumulant", "get_family", "neg_loglik",
    "ObservationSet", "ProcessFit", "StructuralParams", "Penalty", "lasso", "scad",
    "PlateauWarning", "TuningConfig", "fit_hdgp", "FitResult",
]
