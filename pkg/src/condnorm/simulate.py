"""Seeded synthetic data and brute-force verification oracles.

The generators produce series whose conditional mean, variance, noise
process and (optionally) a planted transport lag are all known, so every
estimation path in the package can be checked against ground truth. The
oracles are deliberately naive dense implementations that share no code
with the production estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import CovariateSet, TimeSeries

DEFAULT_START = 1569888000  # 2019-10-01T00:00:00Z
DEFAULT_DELTA = 300


@dataclass(frozen=True)
class SimSpec:
    """Recipe for one synthetic dataset; the seed is mandatory.

    mean: ``constant`` (0), ``linear`` (1 + 2z) or ``sine`` (2 sin z).
    variance: ``constant`` (= var_scale) or ``exp`` (= exp(z)).
    noise: ``white`` or ``ar`` with ``ar_coefficients``; AR noise is scaled
        to unit marginal variance so the variance preset stays truthful.
    lag_rule: ``none``, ``constant`` or ``threshold``. With a lag rule the
        downstream series is y_t = x_(t - d(z_t)) + transport noise, where
        x is white upstream noise.
    covariate: ``walk`` (reflected random walk on [-1, 1]) or ``seasonal``.
    """

    n: int
    seed: int
    mean: str = "linear"
    variance: str = "constant"
    var_scale: float = 1.0
    noise: str = "white"
    ar_coefficients: tuple = ()
    lag_rule: str = "none"
    lag_values: tuple = (3,)
    lag_threshold: float = 0.0
    transport_noise_sd: float = 0.3
    covariate: str = "walk"
    walk_step: float = 0.05
    seasonal_period: int = 288
    missing_rate: float = 0.0
    start_epoch: int = DEFAULT_START
    delta: int = DEFAULT_DELTA

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.mean not in ("constant", "linear", "sine"):
            raise ValueError(f"unknown mean preset {self.mean!r}")
        if self.variance not in ("constant", "exp"):
            raise ValueError(f"unknown variance preset {self.variance!r}")
        if self.noise not in ("white", "ar"):
            raise ValueError(f"unknown noise preset {self.noise!r}")
        if self.noise == "ar" and not self.ar_coefficients:
            raise ValueError("ar noise needs ar_coefficients")
        if self.lag_rule not in ("none", "constant", "threshold"):
            raise ValueError(f"unknown lag rule {self.lag_rule!r}")
        if self.lag_rule == "constant" and len(self.lag_values) != 1:
            raise ValueError("constant lag rule takes one lag value")
        if self.lag_rule == "threshold" and len(self.lag_values) != 2:
            raise ValueError("threshold lag rule takes two lag values")
        if self.covariate not in ("walk", "seasonal"):
            raise ValueError(f"unknown covariate preset {self.covariate!r}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must be in [0, 1)")


@dataclass(frozen=True)
class TruthRecord:
    """Every quantity used to generate a dataset."""

    mean: np.ndarray
    variance: np.ndarray
    noise: np.ndarray
    y_full: np.ndarray
    covariate: np.ndarray
    lag: np.ndarray | None = None
    x_full: np.ndarray | None = None
    ar_coefficients: tuple = ()
    innovation_sd: float = 1.0
    extras: dict = field(default_factory=dict)


def _stationary_variance(coeffs: np.ndarray) -> float:
    """Marginal variance of an AR process with unit-variance innovations."""
    p = coeffs.size
    if p == 0:
        return 1.0
    t = np.zeros((p, p))
    t[0, :] = coeffs
    if p > 1:
        t[1:, :-1] = np.eye(p - 1)
    q = np.zeros((p, p))
    q[0, 0] = 1.0
    vec = np.linalg.solve(np.eye(p * p) - np.kron(t, t), q.ravel())
    return float(vec.reshape(p, p)[0, 0])


def _covariate_path(spec: SimSpec, rng) -> np.ndarray:
    if spec.covariate == "seasonal":
        t = np.arange(spec.n)
        return np.sin(2.0 * np.pi * t / spec.seasonal_period) + 0.05 * rng.standard_normal(spec.n)
    z = np.empty(spec.n)
    z[0] = rng.uniform(-1.0, 1.0)
    steps = rng.uniform(-spec.walk_step, spec.walk_step, spec.n)
    for i in range(1, spec.n):
        w = z[i - 1] + steps[i]
        if w > 1.0:
            w = 2.0 - w
        elif w < -1.0:
            w = -2.0 - w
        z[i] = w
    return z


def _noise_path(spec: SimSpec, rng) -> tuple[np.ndarray, float]:
    if spec.noise == "white":
        return rng.standard_normal(spec.n), 1.0
    coeffs = np.asarray(spec.ar_coefficients, dtype=np.float64)
    sd = 1.0 / np.sqrt(_stationary_variance(coeffs))
    burn = 200 + 10 * coeffs.size
    innov = sd * rng.standard_normal(spec.n + burn)
    e = np.zeros(spec.n + burn)
    p = coeffs.size
    for t in range(spec.n + burn):
        acc = innov[t]
        for i in range(min(p, t)):
            acc += coeffs[i] * e[t - 1 - i]
        e[t] = acc
    return e[burn:], sd


def _mean_of(spec: SimSpec, z: np.ndarray) -> np.ndarray:
    if spec.mean == "constant":
        return np.zeros_like(z)
    if spec.mean == "linear":
        return 1.0 + 2.0 * z
    return 2.0 * np.sin(z)


def _variance_of(spec: SimSpec, z: np.ndarray) -> np.ndarray:
    if spec.variance == "constant":
        return np.full_like(z, spec.var_scale)
    return np.exp(z)


def simulate(spec: SimSpec):
    """Generate ``(x, y, covariates, truth)``; deterministic per seed.

    ``x`` is None unless a transport lag rule is set.
    """
    rng = np.random.default_rng(spec.seed)
    z = _covariate_path(spec, rng)
    ts = spec.start_epoch + spec.delta * np.arange(spec.n, dtype=np.int64)
    cov = CovariateSet(
        timestamps=ts, names=("z",), values=z[:, None], mask=None, delta=spec.delta
    )

    if spec.lag_rule == "none":
        noise, innov_sd = _noise_path(spec, rng)
        mean = _mean_of(spec, z)
        variance = _variance_of(spec, z)
        y_full = mean + np.sqrt(variance) * noise
        truth = TruthRecord(
            mean=mean,
            variance=variance,
            noise=noise,
            y_full=y_full.copy(),
            covariate=z,
            ar_coefficients=tuple(spec.ar_coefficients),
            innovation_sd=innov_sd,
        )
        x_series = None
    else:
        if spec.lag_rule == "constant":
            lag = np.full(spec.n, spec.lag_values[0], dtype=np.int64)
        else:
            lag = np.where(
                z < spec.lag_threshold, spec.lag_values[0], spec.lag_values[1]
            ).astype(np.int64)
        head = int(lag.max())
        x_ext = rng.standard_normal(spec.n + head)
        x_full = x_ext[head:]
        noise = rng.standard_normal(spec.n)
        y_full = x_ext[head + np.arange(spec.n) - lag] + spec.transport_noise_sd * noise
        mean = np.zeros(spec.n)
        variance = np.full(spec.n, 1.0 + spec.transport_noise_sd**2)
        truth = TruthRecord(
            mean=mean,
            variance=variance,
            noise=noise,
            y_full=y_full.copy(),
            covariate=z,
            lag=lag,
            x_full=x_full.copy(),
            extras={"transport_noise_sd": spec.transport_noise_sd},
        )
        x_series = TimeSeries(name="x", timestamps=ts, values=x_full, delta=spec.delta)

    mask = np.zeros(spec.n, dtype=bool)
    if spec.missing_rate > 0.0:
        mask = rng.random(spec.n) < spec.missing_rate
    y_series = TimeSeries(name="y", timestamps=ts, values=y_full, mask=mask, delta=spec.delta)
    return x_series, y_series, cov, truth


def oracle_ridge(basis_matrix, penalty, lam, y) -> np.ndarray:
    """Dense generalized-ridge solution (B'B + lam S)^-1 B'y."""
    b = np.asarray(basis_matrix, dtype=np.float64)
    s = np.asarray(penalty, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.linalg.solve(b.T @ b + lam * s, b.T @ y)


def oracle_gaussian_condition(cov, observed_idx, observed_values, mean=None) -> np.ndarray:
    """Conditional means of a joint Gaussian given a subset of coordinates.

    Returns the full mean vector; observed coordinates keep their values.
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0]
    mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=np.float64)
    obs = np.asarray(observed_idx, dtype=np.intp)
    vals = np.asarray(observed_values, dtype=np.float64)
    out = mean.copy()
    if obs.size == 0:
        return out
    hidden = np.setdiff1d(np.arange(n), obs)
    out[obs] = vals
    if hidden.size == 0:
        return out
    sigma_oo = cov[np.ix_(obs, obs)]
    sigma_ho = cov[np.ix_(hidden, obs)]
    out[hidden] = mean[hidden] + sigma_ho @ np.linalg.solve(sigma_oo, vals - mean[obs])
    return out


def oracle_classical_ccf(x, y, max_lag: int) -> np.ndarray:
    """Textbook sample cross-correlation between x_t and y_(t+k), k=1..max_lag."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if y.size != n:
        raise ValueError("series must have equal length")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = n * x.std() * y.std()
    out = np.empty(max_lag)
    for k in range(1, max_lag + 1):
        out[k - 1] = np.sum(xd[: n - k] * yd[k:]) / denom
    return out
