"""Intrinsic Gaussian process regression for responses on Riemannian manifolds."""

from .baselines import MGPR, AmbientEmbedding, WrappedGPR
from .bpf import GeodesicCurve, PiecewiseGeodesicCurve, fit_geodesic_regression, local_linear_smooth
from .covariance import Coregionalization, CovarianceModel, KernelSpec, transport_covariance
from .estimators import IntrinsicGPR
from .exceptions import (
    ConditioningError,
    ConditioningWarning,
    ConvergenceError,
    ConvergenceWarning,
    DataError,
    IGPRError,
    InitializationError,
    InvalidPointError,
    OptimizationError,
    SingularityError,
)
from .gp import FittedModel, PosteriorPrediction, change_frame, rebase_anchor, sample_prior
from .manifolds import SPD, Frame, Sphere, parse_manifold, transport_frame
from .metrics import rmsge
from .scenarios import Dataset, ScenarioSpec, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "AmbientEmbedding",
    "ConditioningError",
    "ConditioningWarning",
    "ConvergenceError",
    "ConvergenceWarning",
    "Coregionalization",
    "CovarianceModel",
    "DataError",
    "Dataset",
    "FittedModel",
    "Frame",
    "GeodesicCurve",
    "IGPRError",
    "InitializationError",
    "IntrinsicGPR",
    "InvalidPointError",
    "KernelSpec",
    "MGPR",
    "OptimizationError",
    "PiecewiseGeodesicCurve",
    "PosteriorPrediction",
    "SPD",
    "ScenarioSpec",
    "SingularityError",
    "Sphere",
    "WrappedGPR",
    "change_frame",
    "fit_geodesic_regression",
    "generate_scenario",
    "local_linear_smooth",
    "parse_manifold",
    "rebase_anchor",
    "rmsge",
    "sample_prior",
    "transport_covariance",
    "transport_frame",
]
