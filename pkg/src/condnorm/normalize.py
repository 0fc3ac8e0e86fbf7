"""Covariate-conditional normalization of a time series and its inverse.

The conditional mean is an additive Gaussian fit of the series on the
covariates; the conditional variance is a Gamma/log additive fit of the
squared mean-model residuals on the same covariates. The normalized
series is (y - mean) / sqrt(variance), invertible exactly wherever the
covariates are observed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import FitError, SchemaError
from .gam import GAMMA_RESPONSE_FLOOR, AdditiveModel
from .series import CovariateSet, TimeSeries, check_same_grid

MIN_FIT_ROWS = 50
VAR_FLOOR_FRACTION = 1e-8


@dataclass(frozen=True, eq=False)
class NormalizedSeries:
    """A normalized series with its per-time fitted mean and variance.

    ``mean`` and ``variance`` are defined wherever the covariates are
    observed (NaN elsewhere); ``series`` is masked wherever the input or
    any covariate was masked. ``variance`` is floored at ``var_floor``.
    """

    series: TimeSeries
    mean: np.ndarray
    variance: np.ndarray
    var_floor: float
    mean_model: AdditiveModel
    var_model: AdditiveModel

    @property
    def values(self) -> np.ndarray:
        return self.series.values

    @property
    def mask(self) -> np.ndarray:
        return self.series.mask


def _check_names(model: AdditiveModel, Z: CovariateSet) -> None:
    if tuple(model.feature_names_in_) != tuple(Z.names):
        raise SchemaError(
            f"model was fit on covariates {tuple(model.feature_names_in_)}, got {tuple(Z.names)}"
        )


class ConditionalNormalizer(BaseEstimator):
    """Fit/transform estimator for conditional normalization.

    Parameters
    ----------
    specs : BasisSpec or sequence of BasisSpec
        Smooth specification per covariate column (broadcast if single).
    var_floor_fraction : float
        The fitted variance is clamped below at this fraction of the
        training response's sample variance.
    """

    def __init__(self, specs=(), var_floor_fraction=VAR_FLOOR_FRACTION, sweeps=2):
        self.specs = specs
        self.var_floor_fraction = var_floor_fraction
        self.sweeps = sweeps

    def fit(self, y: TimeSeries, Z: CovariateSet) -> "ConditionalNormalizer":
        check_same_grid(y, Z)
        rows = y.observed & ~Z.any_missing
        n_rows = int(rows.sum())
        if n_rows < MIN_FIT_ROWS:
            raise FitError(
                f"conditional normalization needs at least {MIN_FIT_ROWS} jointly observed rows, got {n_rows}"
            )
        yy = y.values[rows]
        zz = Z.values[rows, :]
        names = list(Z.names)
        mean_model = AdditiveModel(
            specs=self.specs, family="gaussian_identity", sweeps=self.sweeps
        ).fit(zz, yy, feature_names=names)
        resid_sq = (yy - mean_model.fitted_values_) ** 2
        var_model = AdditiveModel(specs=self.specs, family="gamma_log", sweeps=self.sweeps).fit(
            zz, resid_sq, feature_names=names
        )
        self.mean_model_ = mean_model
        self.var_model_ = var_model
        sample_var = float(np.var(yy))
        self.var_floor_ = max(self.var_floor_fraction * sample_var, GAMMA_RESPONSE_FLOOR)
        self.n_rows_ = n_rows
        return self

    def _moments(self, Z: CovariateSet):
        _check_names(self.mean_model_, Z)
        _check_names(self.var_model_, Z)
        usable = ~Z.any_missing
        mean = np.full(len(Z), np.nan)
        variance = np.full(len(Z), np.nan)
        if usable.any():
            zz = Z.values[usable, :]
            mean[usable] = self.mean_model_.predict(zz)
            variance[usable] = np.maximum(self.var_model_.predict(zz), self.var_floor_)
        return mean, variance

    def transform(self, y: TimeSeries, Z: CovariateSet) -> NormalizedSeries:
        """Normalize ``y`` given covariate rows ``Z`` (masks propagate)."""
        check_same_grid(y, Z)
        mean, variance = self._moments(Z)
        out_mask = y.mask | Z.any_missing
        values = np.full(len(y), np.nan)
        ok = ~out_mask
        values[ok] = (y.values[ok] - mean[ok]) / np.sqrt(variance[ok])
        return NormalizedSeries(
            series=y.replace(values=values, mask=out_mask),
            mean=mean,
            variance=variance,
            var_floor=self.var_floor_,
            mean_model=self.mean_model_,
            var_model=self.var_model_,
        )

    def fit_transform(self, y: TimeSeries, Z: CovariateSet) -> NormalizedSeries:
        return self.fit(y, Z).transform(y, Z)

    def inverse_transform(self, normalized_values, Z: CovariateSet) -> np.ndarray:
        """Map normalized values back to the response scale at rows of Z."""
        mean, variance = self._moments(Z)
        values = np.asarray(normalized_values, dtype=np.float64)
        if values.shape != mean.shape:
            raise ValueError("normalized values must align with the covariate rows")
        return values * np.sqrt(variance) + mean


def fit_conditional_normalizer(y: TimeSeries, Z: CovariateSet, specs, sweeps=2):
    """Fit the mean and variance models; returns ``(mean_model, var_model)``."""
    normalizer = ConditionalNormalizer(specs=specs, sweeps=sweeps).fit(y, Z)
    return normalizer.mean_model_, normalizer.var_model_


def normalize(y, Z, mean_model, var_model, var_floor=GAMMA_RESPONSE_FLOOR) -> NormalizedSeries:
    """Functional form of :meth:`ConditionalNormalizer.transform`."""
    normalizer = ConditionalNormalizer.__new__(ConditionalNormalizer)
    normalizer.mean_model_ = mean_model
    normalizer.var_model_ = var_model
    normalizer.var_floor_ = var_floor
    return normalizer.transform(y, Z)


def unnormalize(normalized_values, Z, mean_model, var_model, var_floor=GAMMA_RESPONSE_FLOOR):
    """Exact inverse of :func:`normalize` at the same covariate rows."""
    normalizer = ConditionalNormalizer.__new__(ConditionalNormalizer)
    normalizer.mean_model_ = mean_model
    normalizer.var_model_ = var_model
    normalizer.var_floor_ = var_floor
    return normalizer.inverse_transform(normalized_values, Z)
