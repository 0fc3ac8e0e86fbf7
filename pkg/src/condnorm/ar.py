"""Autoregressive modeling, exact Kalman smoothing, and gap imputation.

Orders are chosen by the corrected Akaike criterion over least-squares
fits of lagged embeddings; all candidate orders are scored on a common
complete-case sample so their criteria are comparable. The smoother runs
on the companion-form state space with no observation noise, so observed
points are reproduced exactly and masked points get the conditional
expectation given everything observed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .errors import ContractError, EstimationError
from .normalize import ConditionalNormalizer
from .series import CovariateSet, TimeSeries, check_same_grid

VAR_FLOOR = 1e-12
Z95 = 1.959963984540054


@dataclass(frozen=True)
class ArModel:
    """AR(p) in mean form: (x_t - mean) = sum_i coef_i (x_(t-i) - mean) + innovation."""

    order: int
    mean: float
    coefficients: np.ndarray
    innovation_variance: float
    aicc: float
    stationary: bool = True

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if coeffs.shape != (self.order,):
            raise ValueError("coefficient count must equal the order")
        object.__setattr__(self, "coefficients", coeffs)
        if self.innovation_variance <= 0:
            raise ValueError("innovation variance must be positive")
        object.__setattr__(self, "stationary", bool(self.spectral_radius() < 1.0))

    @property
    def intercept(self) -> float:
        """Intercept form of the recursion: x_t = intercept + sum coef_i x_(t-i) + e_t."""
        return float(self.mean * (1.0 - self.coefficients.sum()))

    def companion(self) -> np.ndarray:
        d = max(self.order, 1)
        t = np.zeros((d, d))
        if self.order:
            t[0, : self.order] = self.coefficients
        if d > 1:
            t[1:, :-1] += np.eye(d - 1)
        return t

    def spectral_radius(self) -> float:
        if self.order == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    def state_space(self) -> "StateSpace":
        d = max(self.order, 1)
        noise = np.zeros((d, d))
        noise[0, 0] = self.innovation_variance
        return StateSpace(transition=self.companion(), observation=np.eye(d)[0], state_noise=noise)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Companion-form state space of an AR model (noise enters the lead state)."""

    transition: np.ndarray
    observation: np.ndarray
    state_noise: np.ndarray

    def __post_init__(self):
        d = self.transition.shape[0]
        if self.transition.shape != (d, d) or self.observation.shape != (d,) or self.state_noise.shape != (d, d):
            raise ValueError("state-space matrices disagree on dimension")


def _aicc(n: int, p: int, sigma2: float) -> float:
    m = p + 2  # coefficients + mean + innovation variance
    if n - m - 1 <= 0:
        return np.inf
    return n * np.log(sigma2) + 2 * m + 2 * m * (m + 1) / (n - m - 1)


def _shrink_to_stationary(coeffs: np.ndarray) -> np.ndarray:
    coeffs = coeffs.copy()
    for _ in range(200):
        d = coeffs.size
        t = np.zeros((d, d))
        t[0, :] = coeffs
        if d > 1:
            t[1:, :-1] += np.eye(d - 1)
        rho = float(np.max(np.abs(np.linalg.eigvals(t))))
        if rho < 1.0:
            return coeffs
        coeffs *= 0.99 / rho
    return coeffs


def fit_ar(x, mask=None, max_order: int = 10) -> ArModel:
    """Select and fit an AR order by AICc on complete-case lagged rows.

    Candidate orders 0..max_order are all estimated by least squares on
    the rows where the target and all ``max_order`` lags are observed;
    ties in AICc go to the smaller order. The variance entering the
    criterion is the unbiased least-squares estimate.
    """
    if isinstance(x, TimeSeries):
        values, miss = x.values, x.mask
    else:
        values = np.asarray(x, dtype=np.float64)
        miss = np.zeros(values.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    miss = miss | ~np.isfinite(values)
    if max_order < 0:
        raise ValueError("max_order must be nonnegative")
    obs = ~miss
    n = values.size

    candidates = np.arange(max_order, n)
    ok = obs[candidates]
    for i in range(1, max_order + 1):
        ok &= obs[candidates - i]
    rows = candidates[ok]
    need = max(10 * max(max_order, 1), 3)
    if rows.size < need:
        raise EstimationError(
            f"need at least {need} complete lagged rows to fit AR(<= {max_order}), got {rows.size}"
        )
    y = values[rows]
    nr = rows.size

    if float(np.var(y)) < VAR_FLOOR:
        warnings.warn("series is (nearly) constant; returning a degenerate AR(0)", stacklevel=2)
        return ArModel(
            order=0,
            mean=float(y.mean()),
            coefficients=np.empty(0),
            innovation_variance=VAR_FLOOR,
            aicc=_aicc(nr, 0, VAR_FLOOR),
        )

    lagged = np.column_stack([values[rows - i] for i in range(1, max_order + 1)]) if max_order else None
    best = None
    for p in range(max_order + 1):
        design = np.ones((nr, p + 1))
        if p:
            design[:, 1:] = lagged[:, :p]
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        rss = float(np.sum((y - design @ beta) ** 2))
        dof = nr - p - 1
        if dof <= 0:
            continue
        sigma2 = max(rss / dof, VAR_FLOOR)
        score = _aicc(nr, p, sigma2)
        if best is None or score < best[0]:
            best = (score, p, beta, sigma2)

    score, p, beta, sigma2 = best
    coeffs = beta[1:]
    total = float(coeffs.sum())
    if abs(1.0 - total) > 1e-8:
        mean = float(beta[0] / (1.0 - total))
    else:
        mean = float(y.mean())
    stationary = True
    if p:
        d = np.zeros((p, p))
        d[0, :] = coeffs
        if p > 1:
            d[1:, :-1] += np.eye(p - 1)
        if float(np.max(np.abs(np.linalg.eigvals(d)))) >= 1.0:
            warnings.warn(
                f"AR({p}) least-squares fit is non-stationary; shrinking coefficients",
                stacklevel=2,
            )
            coeffs = _shrink_to_stationary(coeffs)
            mean = float(y.mean())
    return ArModel(
        order=p,
        mean=mean,
        coefficients=coeffs,
        innovation_variance=sigma2,
        aicc=score,
        stationary=stationary,
    )


def kalman_smooth(x, mask=None, model: ArModel = None, return_filtered: bool = False):
    """Exact Gaussian smoothing of a masked series under an AR model.

    Returns ``(means, variances)`` on the full grid. Observed positions
    come back exactly; masked positions carry the conditional expectation
    given all observed data and its variance. With ``return_filtered`` the
    one-sided (filtered) means and variances are appended to the result.
    """
    if isinstance(x, TimeSeries):
        values, miss = x.values, x.mask
    else:
        values = np.asarray(x, dtype=np.float64)
        miss = np.zeros(values.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    miss = miss | ~np.isfinite(values)
    if model is None:
        raise ValueError("an ArModel is required")
    if model.spectral_radius() >= 1.0:
        raise ContractError("kalman_smooth requires a stationary AR model")

    n = values.size
    d = max(model.order, 1)
    space = model.state_space()
    t_mat = space.transition
    q = space.state_noise
    obs = values - model.mean

    p0 = solve_discrete_lyapunov(t_mat, q)
    a = np.zeros(d)
    p = (p0 + p0.T) / 2.0

    a_pred = np.empty((n, d))
    p_pred = np.empty((n, d, d))
    v_arr = np.zeros(n)
    f_arr = np.full(n, np.nan)
    k_arr = np.zeros((n, d))
    filt_mean = np.empty(n)
    filt_var = np.empty(n)
    for i in range(n):
        a_pred[i], p_pred[i] = a, p
        if miss[i]:
            filt_mean[i] = a[0] + model.mean
            filt_var[i] = p[0, 0]
            a = t_mat @ a
            p = t_mat @ p @ t_mat.T + q
        else:
            f = p[0, 0]
            v = obs[i] - a[0]
            k = (t_mat @ p[:, 0]) / f
            v_arr[i], f_arr[i], k_arr[i] = v, f, k
            filt_mean[i] = values[i]
            filt_var[i] = 0.0
            a = t_mat @ a + k * v
            l_mat = t_mat - np.outer(k, np.eye(d)[0])
            p = t_mat @ p @ l_mat.T + q
        p = (p + p.T) / 2.0

    r = np.zeros(d)
    n_mat = np.zeros((d, d))
    means = np.empty(n)
    variances = np.empty(n)
    e0 = np.eye(d)[0]
    for i in range(n - 1, -1, -1):
        if miss[i]:
            l_mat = t_mat
            r_prev = t_mat.T @ r
            n_prev = t_mat.T @ n_mat @ t_mat
        else:
            l_mat = t_mat - np.outer(k_arr[i], e0)
            r_prev = e0 * (v_arr[i] / f_arr[i]) + l_mat.T @ r
            n_prev = np.outer(e0, e0) / f_arr[i] + l_mat.T @ n_mat @ l_mat
        alpha = a_pred[i] + p_pred[i] @ r_prev
        vmat = p_pred[i] - p_pred[i] @ n_prev @ p_pred[i]
        means[i] = alpha[0] + model.mean
        variances[i] = max(vmat[0, 0], 0.0)
        r, n_mat = r_prev, n_prev
    means[~miss] = values[~miss]
    variances[~miss] = 0.0
    if return_filtered:
        return means, variances, filt_mean, filt_var
    return means, variances


@dataclass(frozen=True, eq=False)
class ImputationResult:
    """Imputed series plus per-position indicator and approximate 95% bounds."""

    series: TimeSeries
    imputed: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray
    normalizer: ConditionalNormalizer
    ar_model: ArModel
    n_negative_removed: int = 0
    extras: dict = field(default_factory=dict)


class TimeSeriesImputer:
    """Impute masked values via conditional normalization + AR smoothing.

    The pipeline normalizes the series on its covariates, fits an AR model
    to the normalized series, fills masked positions with the Kalman
    smoother, and maps the fills back to the response scale. Positions
    whose covariates are missing stay masked. With ``nonnegative=True``,
    negative fills are re-masked (physically nonnegative variables).
    """

    def __init__(self, specs=(), max_order: int = 10, nonnegative: bool = False, sweeps=2):
        self.specs = specs
        self.max_order = max_order
        self.nonnegative = nonnegative
        self.sweeps = sweeps

    def fit(self, y: TimeSeries, Z: CovariateSet) -> "TimeSeriesImputer":
        check_same_grid(y, Z)
        self.normalizer_ = ConditionalNormalizer(specs=self.specs, sweeps=self.sweeps).fit(y, Z)
        normalized = self.normalizer_.transform(y, Z)
        self.ar_model_ = fit_ar(normalized.values, normalized.mask, self.max_order)
        return self

    def transform(self, y: TimeSeries, Z: CovariateSet) -> ImputationResult:
        check_same_grid(y, Z)
        normalized = self.normalizer_.transform(y, Z)
        smoothed, smooth_var = kalman_smooth(normalized.values, normalized.mask, self.ar_model_)
        fill = y.mask & ~Z.any_missing

        scale = np.sqrt(normalized.variance)
        values = y.values.copy()
        values[fill] = smoothed[fill] * scale[fill] + normalized.mean[fill]
        lower = np.full(len(y), np.nan)
        upper = np.full(len(y), np.nan)
        half = Z95 * np.sqrt(smooth_var[fill]) * scale[fill]
        lower[fill] = values[fill] - half
        upper[fill] = values[fill] + half

        n_negative = 0
        if self.nonnegative:
            bad = fill & (values < 0.0)
            n_negative = int(bad.sum())
            values[bad] = np.nan
            fill = fill & ~bad
            lower[bad] = np.nan
            upper[bad] = np.nan
        out = y.replace(values=values, mask=y.mask & ~fill)
        return ImputationResult(
            series=out,
            imputed=fill,
            lower95=lower,
            upper95=upper,
            normalizer=self.normalizer_,
            ar_model=self.ar_model_,
            n_negative_removed=n_negative,
        )

    def fit_transform(self, y: TimeSeries, Z: CovariateSet) -> ImputationResult:
        return self.fit(y, Z).transform(y, Z)


def impute_series(
    y: TimeSeries, Z: CovariateSet, specs, max_order: int = 10, nonnegative: bool = False
) -> ImputationResult:
    """One-shot imputation pipeline; see :class:`TimeSeriesImputer`."""
    return TimeSeriesImputer(
        specs=specs, max_order=max_order, nonnegative=nonnegative
    ).fit_transform(y, Z)
