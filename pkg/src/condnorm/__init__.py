"""Covariate-conditional normalization of time series, with downstream
imputation, conditional correlation, and lag-time estimation."""

from .ar import (
    ArModel,
    ImputationResult,
    StateSpace,
    TimeSeriesImputer,
    fit_ar,
    impute_series,
    kalman_smooth,
)
from .basis import BasisMatrix, BasisSpec, FourierTerms, build_basis, fourier_terms, make_basis
from .crosscorr import (
    ConditionalACF,
    ConditionalCCF,
    LagCorrelationModel,
    LagCorrelationSet,
    LagTimeEstimate,
    LagTimeEvaluation,
    conditional_acf,
    conditional_ccf,
    estimate_lag_time,
    evaluate_lag_time,
    sieve_bootstrap_ci,
)
from .errors import (
    AlignmentError,
    BasisError,
    BootstrapError,
    CondnormError,
    ContractError,
    EstimationError,
    FitError,
    OverlapError,
    SchemaError,
)
from .gam import AdditiveModel, corr_link, corr_link_inv, fit_gam
from .normalize import (
    ConditionalNormalizer,
    NormalizedSeries,
    fit_conditional_normalizer,
    normalize,
    unnormalize,
)
from .series import (
    CovariateSet,
    QualityFlag,
    TimeSeries,
    aggregate,
    align,
    linear_interpolate,
    remove_range_flagged,
    remove_wiper_anomalies,
)
from .simulate import (
    SimSpec,
    TruthRecord,
    oracle_classical_ccf,
    oracle_gaussian_condition,
    oracle_ridge,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveModel",
    "AlignmentError",
    "ArModel",
    "BasisError",
    "BasisMatrix",
    "BasisSpec",
    "BootstrapError",
    "ConditionalACF",
    "ConditionalCCF",
    "ConditionalNormalizer",
    "CondnormError",
    "ContractError",
    "CovariateSet",
    "EstimationError",
    "FitError",
    "FourierTerms",
    "ImputationResult",
    "LagCorrelationModel",
    "LagCorrelationSet",
    "LagTimeEstimate",
    "LagTimeEvaluation",
    "NormalizedSeries",
    "OverlapError",
    "QualityFlag",
    "SchemaError",
    "SimSpec",
    "StateSpace",
    "TimeSeries",
    "TimeSeriesImputer",
    "TruthRecord",
    "aggregate",
    "align",
    "build_basis",
    "conditional_acf",
    "conditional_ccf",
    "corr_link",
    "corr_link_inv",
    "estimate_lag_time",
    "evaluate_lag_time",
    "fit_ar",
    "fit_conditional_normalizer",
    "fit_gam",
    "fourier_terms",
    "impute_series",
    "kalman_smooth",
    "linear_interpolate",
    "make_basis",
    "normalize",
    "oracle_classical_ccf",
    "oracle_gaussian_condition",
    "oracle_ridge",
    "remove_range_flagged",
    "remove_wiper_anomalies",
    "sieve_bootstrap_ci",
    "simulate",
    "unnormalize",
]
