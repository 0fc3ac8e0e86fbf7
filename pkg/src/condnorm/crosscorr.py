"""Conditional auto/cross-correlation by lag, lag-time estimation, and
sieve-bootstrap confidence intervals.

For each lag k the cross-product of two normalized series is regressed on
the covariates with the bounded correlation link, giving a per-lag smooth
correlation surface. The lag time at a covariate row is the lag whose
surface is highest there (ties to the smallest lag). Intervals come from
a sieve bootstrap: per-lag model residuals are whitened by an AR fit,
innovations are resampled with replacement, residual paths are rebuilt by
the AR recursion, responses are reassembled and every per-lag model is
refit (smoothing parameters held at their selected values).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter, lfiltic
from sklearn.base import BaseEstimator

from .ar import ArModel, fit_ar
from .errors import BootstrapError, EstimationError, FitError
from .gam import AdditiveModel
from .normalize import NormalizedSeries
from .series import CovariateSet, TimeSeries, check_same_grid

MIN_LAG_ROWS = 50
DEFAULT_MAX_LAG = 24
DEFAULT_REPLICATES = 1000
DEFAULT_LEVELS = (0.20, 0.05)


def _series_parts(obj):
    if isinstance(obj, NormalizedSeries):
        return obj.series.values, obj.series.mask, obj.series
    if isinstance(obj, TimeSeries):
        return obj.values, obj.mask, obj
    raise TypeError("expected a NormalizedSeries or TimeSeries")


@dataclass(eq=False)
class LagCorrelationModel:
    """One lag's fitted conditional correlation surface.

    ``used``, ``residuals`` and ``fitted`` live on the input grid, indexed
    by the time of the unlagged factor; unused rows hold NaN.
    """

    lag: int
    model: AdditiveModel
    used: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    residual_ar: ArModel
    n_used: int

    def predict(self, covariate_rows) -> np.ndarray:
        return self.model.predict(covariate_rows)


@dataclass(eq=False)
class LagCorrelationSet:
    """Per-lag models for k = 1..max_lag, plus any skipped lags."""

    kind: str
    max_lag: int
    models: list
    skipped: dict

    @property
    def lags(self):
        return [m.lag for m in self.models]

    def correlation_matrix(self, covariate_rows) -> np.ndarray:
        """Fitted correlations, one column per successfully fitted lag."""
        if not self.models:
            raise EstimationError("no fitted lag models")
        return np.column_stack([m.predict(covariate_rows) for m in self.models])


@dataclass(eq=False)
class LagTimeEstimate:
    """Per-row argmax lag with its correlation and optional interval bounds."""

    lags: np.ndarray
    max_correlation: np.ndarray
    row_indices: np.ndarray | None = None
    intervals: dict = field(default_factory=dict)
    n_replicates: int = 0
    n_dropped: int = 0


def _fit_lag_models(kind, xs, xmask, ys, ymask, Z, max_lag, specs, ar_max_order, sweeps, threads):
    if max_lag < 1:
        raise ValueError("max_lag must be at least 1")
    n = len(Z)
    zmiss = Z.any_missing
    names = list(Z.names)

    def fit_one(k):
        used = np.zeros(n, dtype=bool)
        resp_full = np.full(n, np.nan)
        if kind == "acf":
            # response at anchor t: y*_t * y*_(t-k), covariates at t
            t = np.arange(k, n)
            ok = ~ymask[t] & ~ymask[t - k] & ~zmiss[t]
            used[t[ok]] = True
            resp_full[t[ok]] = ys[t[ok]] * ys[t[ok] - k]
        else:
            # response at anchor t: y*_(t+k) * x*_t, covariates at t
            t = np.arange(0, n - k)
            ok = ~xmask[t] & ~ymask[t + k] & ~zmiss[t]
            used[t[ok]] = True
            resp_full[t[ok]] = ys[t[ok] + k] * xs[t[ok]]
        n_used = int(used.sum())
        if n_used < MIN_LAG_ROWS:
            return k, None, f"only {n_used} usable rows (need {MIN_LAG_ROWS})"
        resp = resp_full[used]
        try:
            model = AdditiveModel(specs=specs, family="gaussian_corr_link", sweeps=sweeps).fit(
                Z.values[used, :], resp, feature_names=names
            )
        except FitError as exc:
            return k, None, str(exc)
        residuals = np.full(n, np.nan)
        fitted = np.full(n, np.nan)
        fitted[used] = model.fitted_values_
        residuals[used] = resp - model.fitted_values_
        residual_ar = fit_ar(resp - model.fitted_values_, max_order=ar_max_order)
        return (
            k,
            LagCorrelationModel(
                lag=k,
                model=model,
                used=used,
                residuals=residuals,
                fitted=fitted,
                residual_ar=residual_ar,
                n_used=n_used,
            ),
            None,
        )

    lags = range(1, max_lag + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fit_one, lags))
    else:
        results = [fit_one(k) for k in lags]
    results.sort(key=lambda r: r[0])
    models = [m for _, m, _ in results if m is not None]
    skipped = {k: reason for k, m, reason in results if m is None}
    if not models:
        raise EstimationError(f"every lag up to {max_lag} was skipped: {skipped}")
    return LagCorrelationSet(kind=kind, max_lag=max_lag, models=models, skipped=skipped)


def conditional_acf(
    y_star,
    Z: CovariateSet,
    max_lag: int = DEFAULT_MAX_LAG,
    specs=(),
    ar_max_order=10,
    sweeps=2,
    threads=1,
) -> LagCorrelationSet:
    """Fit the conditional autocorrelation surface for each lag."""
    ys, ymask, series = _series_parts(y_star)
    check_same_grid(series, Z)
    return _fit_lag_models(
        "acf", ys, ymask, ys, ymask, Z, max_lag, specs, ar_max_order, sweeps, threads
    )


def conditional_ccf(
    x_star,
    y_star,
    Z: CovariateSet,
    max_lag: int = DEFAULT_MAX_LAG,
    specs=(),
    ar_max_order=10,
    sweeps=2,
    threads=1,
) -> LagCorrelationSet:
    """Fit the conditional cross-correlation surface for each lag.

    The response at anchor time t is ``y*_(t+k) * x*_t`` and the
    covariates are taken at t (the upstream side). Per-lag fits are
    independent; ``threads`` > 1 runs them concurrently with results
    identical to the serial order.
    """
    xs, xmask, xseries = _series_parts(x_star)
    ys, ymask, yseries = _series_parts(y_star)
    check_same_grid(xseries, yseries)
    check_same_grid(xseries, Z)
    return _fit_lag_models(
        "ccf", xs, xmask, ys, ymask, Z, max_lag, specs, ar_max_order, sweeps, threads
    )


def _covariate_rows(models: LagCorrelationSet, Z):
    if isinstance(Z, CovariateSet):
        rows = np.flatnonzero(~Z.any_missing)
        return Z.values[rows, :], rows
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    return Z, None


def estimate_lag_time(models: LagCorrelationSet, Z) -> LagTimeEstimate:
    """Per covariate row, the lag with the highest fitted correlation.

    ``Z`` may be a CovariateSet (rows with observed covariates are used
    and remembered) or a plain (n, p) array of covariate rows. Ties go to
    the smallest lag; skipped lags never win.
    """
    zrows, row_indices = _covariate_rows(models, Z)
    corr = models.correlation_matrix(zrows)
    pick = np.argmax(corr, axis=1)
    lags = np.asarray(models.lags, dtype=np.int64)[pick]
    best = corr[np.arange(corr.shape[0]), pick]
    return LagTimeEstimate(lags=lags, max_correlation=best, row_indices=row_indices)


def _bootstrap_prep(models: LagCorrelationSet, zrows):
    prep = []
    for m in models.models:
        eps = m.residuals[m.used]
        fitted = m.fitted[m.used]
        arm = m.residual_ar
        p = arm.order
        if p:
            t = np.arange(p, eps.size)
            zeta = eps[t] - arm.intercept - sum(
                arm.coefficients[i] * eps[t - 1 - i] for i in range(p)
            )
        else:
            zeta = eps - arm.mean
        zeta = zeta - zeta.mean()
        if zeta.size == 0:
            zeta = np.zeros(1)
        design = m.model.design_matrix(zrows)
        family = m.model._family()
        prep.append((m, eps, fitted, arm, zeta, design, family))
    return prep


def _ar_recursion(arm: ArModel, init: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    """Run e_t = intercept + sum coef_i e_(t-i) + innov_t after ``init`` values."""
    p = arm.order
    if p == 0:
        return np.concatenate([init, arm.intercept + innovations])
    a = np.concatenate([[1.0], -arm.coefficients])
    zi = lfiltic([1.0], a, init[::-1])
    out, _ = lfilter([1.0], a, arm.intercept + innovations, zi=zi)
    return np.concatenate([init, out])


def _one_replicate(prep, lags_arr, rng, burn_in):
    cols = []
    for m, eps, fitted, arm, zeta, design, family in prep:
        t_len = eps.size
        p = arm.order
        total = t_len + burn_in
        draw = zeta[rng.integers(0, zeta.size, size=total - p)]
        init = np.full(p, arm.mean) if burn_in else eps[:p].copy()
        eps_b = _ar_recursion(arm, init, draw)[-t_len:]
        theta = m.model.refit_coefficients(fitted + eps_b)
        cols.append(family.linkinv(design @ theta))
    corr = np.column_stack(cols)
    return lags_arr[np.argmax(corr, axis=1)]


def sieve_bootstrap_ci(
    models: LagCorrelationSet,
    Z,
    replicates: int = DEFAULT_REPLICATES,
    levels=DEFAULT_LEVELS,
    seed: int = 0,
    threads: int = 1,
    burn_in: int = 0,
    max_dropped_fraction: float = 0.05,
) -> LagTimeEstimate:
    """Sieve-bootstrap confidence bounds for the per-row lag time.

    Per replicate and lag: centered AR innovations of the model residuals
    are resampled with replacement, the residual path is rebuilt by the AR
    recursion (initialized with the first order-many observed residuals,
    or started from the process mean when ``burn_in`` > 0), responses are
    reassembled on the fitted surface, the model is refit, and the lag
    time recomputed. Bounds are empirical quantiles (order statistics) of
    the replicate lag times, widened if needed to include the point
    estimate. Deterministic given (inputs, seed, replicates); replicate b
    always uses the child generator spawned from (seed, b).
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    zrows, row_indices = _covariate_rows(models, Z)
    point = estimate_lag_time(models, zrows)
    prep = _bootstrap_prep(models, zrows)
    lags_arr = np.asarray(models.lags, dtype=np.int64)

    samples = np.zeros((replicates, zrows.shape[0]), dtype=np.int64)
    good = np.zeros(replicates, dtype=bool)

    def run(b):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
        try:
            return b, _one_replicate(prep, lags_arr, rng, burn_in)
        except FitError:
            return b, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(replicates)))
    else:
        results = [run(b) for b in range(replicates)]
    for b, row in results:
        if row is not None:
            samples[b] = row
            good[b] = True

    n_dropped = int((~good).sum())
    if n_dropped > max_dropped_fraction * replicates:
        raise BootstrapError(
            f"{n_dropped} of {replicates} bootstrap replicates failed to refit"
        )
    kept = samples[good]
    intervals = {}
    for level in levels:
        lo = np.quantile(kept, level / 2.0, axis=0, method="inverted_cdf")
        hi = np.quantile(kept, 1.0 - level / 2.0, axis=0, method="inverted_cdf")
        lo = np.minimum(lo.astype(np.int64), point.lags)
        hi = np.maximum(hi.astype(np.int64), point.lags)
        intervals[float(level)] = (lo, hi)
    return replace(
        point,
        row_indices=row_indices,
        intervals=intervals,
        n_replicates=int(good.sum()),
        n_dropped=n_dropped,
    )


@dataclass(eq=False)
class LagTimeEvaluation:
    """Row-wise comparison of the lag-time model against every per-lag fit.

    ``fraction`` is the share of rows where the lag-time model's fitted
    correlation strictly exceeds every per-lag fitted correlation.
    ``fraction_pairwise`` counts (row, lag) comparisons instead, and
    ``fraction_excluding_selected`` skips each row's own selected lag;
    both are reported for diagnosis only.
    """

    fraction: float
    fraction_pairwise: float
    fraction_excluding_selected: float
    row_indices: np.ndarray
    fitted_best: np.ndarray
    per_lag: np.ndarray
    lags: list
    model: AdditiveModel


def evaluate_lag_time(
    x_star, y_star, Z: CovariateSet, estimate: LagTimeEstimate, models: LagCorrelationSet, sweeps=2
) -> LagTimeEvaluation:
    """Fit one model to the lead response at the estimated lag and compare.

    Builds ``y*_(t + d_t) * x*_t`` at each evaluation row, fits a fresh
    correlation-link model on the covariates, and counts the rows where
    its fit strictly exceeds every per-lag fit.
    """
    xs, xmask, xseries = _series_parts(x_star)
    ys, ymask, yseries = _series_parts(y_star)
    check_same_grid(xseries, Z)
    if estimate.row_indices is None:
        raise ValueError("estimate must carry grid row indices (estimate on the CovariateSet)")
    rows = estimate.row_indices
    n = len(Z)
    lead = rows + estimate.lags
    ok = (lead < n) & ~xmask[rows] & ~ymask[np.minimum(lead, n - 1)]
    rows = rows[ok]
    lead = lead[ok]
    if rows.size < MIN_LAG_ROWS:
        raise EstimationError(f"only {rows.size} usable evaluation rows")
    resp = ys[lead] * xs[rows]
    zrows = Z.values[rows, :]
    spec_source = models.models[0].model
    model = AdditiveModel(
        specs=spec_source.specs, family="gaussian_corr_link", sweeps=sweeps
    ).fit(zrows, resp, feature_names=list(Z.names))
    fitted_best = model.predict(zrows)
    per_lag = models.correlation_matrix(zrows)
    exceed = fitted_best[:, None] > per_lag
    selected = estimate.lags[ok]
    lag_cols = np.asarray(models.lags, dtype=np.int64)
    is_selected = lag_cols[None, :] == selected[:, None]
    frac_excl = float((exceed | is_selected).all(axis=1).mean())
    return LagTimeEvaluation(
        fraction=float(exceed.all(axis=1).mean()),
        fraction_pairwise=float(exceed.mean()),
        fraction_excluding_selected=frac_excl,
        row_indices=rows,
        fitted_best=fitted_best,
        per_lag=per_lag,
        lags=models.lags,
        model=model,
    )


class ConditionalCCF(BaseEstimator):
    """Estimator wrapper: fit per-lag models, then predict lag times.

    ``fit`` takes the two normalized series and the covariates;
    ``predict`` maps covariate rows to estimated lag times.
    """

    def __init__(self, specs=(), max_lag=DEFAULT_MAX_LAG, ar_max_order=10, sweeps=2):
        self.specs = specs
        self.max_lag = max_lag
        self.ar_max_order = ar_max_order
        self.sweeps = sweeps

    def fit(self, x_star, y_star, Z: CovariateSet) -> "ConditionalCCF":
        self.result_ = conditional_ccf(
            x_star,
            y_star,
            Z,
            max_lag=self.max_lag,
            specs=self.specs,
            ar_max_order=self.ar_max_order,
            sweeps=self.sweeps,
        )
        return self

    def correlations(self, covariate_rows) -> np.ndarray:
        return self.result_.correlation_matrix(covariate_rows)

    def predict(self, covariate_rows) -> np.ndarray:
        return estimate_lag_time(self.result_, covariate_rows).lags

    def lag_time(self, Z) -> LagTimeEstimate:
        return estimate_lag_time(self.result_, Z)

    def bootstrap_ci(self, Z, **kwargs) -> LagTimeEstimate:
        return sieve_bootstrap_ci(self.result_, Z, **kwargs)


class ConditionalACF(BaseEstimator):
    """Estimator wrapper over :func:`conditional_acf`."""

    def __init__(self, specs=(), max_lag=DEFAULT_MAX_LAG, ar_max_order=10, sweeps=2):
        self.specs = specs
        self.max_lag = max_lag
        self.ar_max_order = ar_max_order
        self.sweeps = sweeps

    def fit(self, y_star, Z: CovariateSet) -> "ConditionalACF":
        self.result_ = conditional_acf(
            y_star,
            Z,
            max_lag=self.max_lag,
            specs=self.specs,
            ar_max_order=self.ar_max_order,
            sweeps=self.sweeps,
        )
        return self

    def correlations(self, covariate_rows) -> np.ndarray:
        return self.result_.correlation_matrix(covariate_rows)
