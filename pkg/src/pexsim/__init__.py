"""Longitudinal cohort simulation and practice-effect-aware estimation."""

from .core import (
    LongitudinalDataset,
    NumericalError,
    RawVisit,
    ValidationError,
    VisitRecord,
    derive_timing,
    validate_dataset,
)
from .design import (
    AlignedPeBin,
    DesignMatrix,
    ModelSpec,
    aligned_pe_estimate,
    build_design,
    standard_spec,
)
from .gee import (
    GeeFit,
    chi_square_sf_1df,
    estimate_rho_moment,
    fit_gee,
    fit_gee_design,
    sandwich_cov,
    wald_test,
)
from .lmm import LmmFit, fit_lmm, fit_lmm_design, icc, reml_profile
from .simulate import (
    SimulationConfig,
    SubjectProfile,
    gen_correlated_errors,
    mean_function,
    simulate_cohorts,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedPeBin",
    "DesignMatrix",
    "GeeFit",
    "LmmFit",
    "LongitudinalDataset",
    "ModelSpec",
    "NumericalError",
    "RawVisit",
    "SimulationConfig",
    "SubjectProfile",
    "ValidationError",
    "VisitRecord",
    "aligned_pe_estimate",
    "build_design",
    "chi_square_sf_1df",
    "derive_timing",
    "estimate_rho_moment",
    "fit_gee",
    "fit_gee_design",
    "fit_lmm",
    "fit_lmm_design",
    "gen_correlated_errors",
    "icc",
    "mean_function",
    "reml_profile",
    "sandwich_cov",
    "simulate_cohorts",
    "standard_spec",
    "validate_dataset",
    "wald_test",
]
