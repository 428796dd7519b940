"""Discrete-time survival regression with an interval-censored, monotone
binary time-varying covariate."""

from .basis import BasisSpec, basis_eval, basis_matrix
from .errors import (
    ConfigError,
    DataInconsistencyError,
    IcsurvError,
    InitializationError,
    InvalidInputError,
    NumericalFailureError,
    SingularInformationError,
    SpecError,
    StudyFailureError,
)
from .inference import FitOptions, FitResult, fit, hessian_fd, vcov_from_hessian, wald_interval
from .likelihood import Panel, PersonRecord, loglik_individual, loglik_total
from .missingness import GroupLabel, KnownStatus, TestHistory, classify, derive_observed, known_mask
from .model import LinkFunction, ModelSpec, ParameterVector
from .simulate import DgpConfig, reference_truth, simulate_dataset
from .study import StudyConfig, run_study, summarize

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "basis_eval", "basis_matrix",
    "ConfigError", "DataInconsistencyError", "IcsurvError", "InitializationError", "InvalidInputError",
    "NumericalFailureError", "SingularInformationError", "SpecError", "StudyFailureError",
    "FitOptions", "FitResult", "fit", "hessian_fd", "vcov_from_hessian", "wald_interval",
    "Panel", "PersonRecord", "loglik_individual", "loglik_total",
    "GroupLabel", "KnownStatus", "TestHistory", "classify", "derive_observed", "known_mask",
    "LinkFunction", "ModelSpec", "ParameterVector",
    "DgpConfig", "reference_truth", "simulate_dataset",
    "StudyConfig", "run_study", "summarize",
]
