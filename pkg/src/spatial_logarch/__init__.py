"""Simulation and quasi-maximum-likelihood estimation of multivariate
spatiotemporal log-ARCH processes."""

__version__ = "0.1.0"

from .model import AMode, Dimensions, ErrorDist, ModelConfig, Panel, ParamSet, ZeroValueError
from .model import error_dist_moments, log_sq_transform, pack_params, unpack_params
from .weights import SpatialWeights, grid_contiguity, load_weights, row_standardize, save_weights, validate_weights
from .likelihood import LikelihoodWorkspace, SingularJacobian, log_det_s
from .simulate import StabilityError, check_stability, simulate, stationary_log_mean
from .estimate import FitOptions, FitResult, fit, standard_errors, validate_assumptions

__all__ = [
    "AMode", "Dimensions", "ErrorDist", "FitOptions", "FitResult", "LikelihoodWorkspace", "ModelConfig",
    "Panel", "ParamSet", "SingularJacobian", "SpatialWeights", "StabilityError", "ZeroValueError",
    "check_stability", "error_dist_moments", "fit", "grid_contiguity", "load_weights", "log_det_s",
    "log_sq_transform", "pack_params", "row_standardize", "save_weights", "simulate", "standard_errors",
    "stationary_log_mean", "unpack_params", "validate_assumptions", "validate_weights",
]
