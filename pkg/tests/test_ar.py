import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

import condnorm.ar
from condnorm import (
    ArModel,
    BasisSpec,
    ContractError,
    EstimationError,
    SimSpec,
    TimeSeriesImputer,
    fit_ar,
    impute_series,
    kalman_smooth,
    oracle_gaussian_condition,
    simulate,
)


def ar_path(coeffs, n, seed, innovation_sd=1.0, mean=0.0):
    rng = np.random.default_rng(seed)
    p = len(coeffs)
    burn = 300
    x = np.zeros(n + burn)
    innov = innovation_sd * rng.standard_normal(n + burn)
    for t in range(n + burn):
        acc = innov[t]
        for i in range(min(p, t)):
            acc += coeffs[i] * x[t - 1 - i]
        x[t] = acc
    return x[burn:] + mean


def dense_ar_covariance(coeffs, innovation_variance, n):
    """Toeplitz covariance of a stationary AR process (test-side oracle)."""
    p = max(len(coeffs), 1)
    t = np.zeros((p, p))
    if len(coeffs):
        t[0, : len(coeffs)] = coeffs
    if p > 1:
        t[1:, :-1] = np.eye(p - 1)
    q = np.zeros((p, p))
    q[0, 0] = innovation_variance
    pstat = solve_discrete_lyapunov(t, q)
    gammas = [pstat[0, 0]]
    tk = np.eye(p)
    for _ in range(n - 1):
        tk = t @ tk
        gammas.append((tk @ pstat)[0, 0])
    gammas = np.asarray(gammas)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return gammas[idx]


class TestArModel:
    def test_intercept_form(self):
        m = ArModel(order=2, mean=4.0, coefficients=[0.5, 0.2], innovation_variance=1.0, aicc=0.0)
        assert m.intercept == pytest.approx(4.0 * (1 - 0.7))

    def test_stationarity_flag(self):
        good = ArModel(order=1, mean=0.0, coefficients=[0.8], innovation_variance=1.0, aicc=0.0)
        bad = ArModel(order=1, mean=0.0, coefficients=[1.2], innovation_variance=1.0, aicc=0.0)
        assert good.stationary and not bad.stationary


class TestFitAr:
    def test_ar1_recovery(self):
        x = ar_path([0.8], 2000, seed=0)
        model = fit_ar(x, max_order=8)
        assert model.order == 1
        assert 0.75 < model.coefficients[0] < 0.85

    def test_white_noise_selects_zero(self):
        rng = np.random.default_rng(3)
        model = fit_ar(rng.standard_normal(2000), max_order=8)
        assert model.order == 0

    def test_masked_values_excluded(self):
        x = ar_path([0.6], 1500, seed=5)
        mask = np.zeros(1500, bool)
        mask[::7] = True
        model = fit_ar(x, mask, max_order=4)
        assert model.order == 1
        assert 0.5 < model.coefficients[0] < 0.7

    def test_constant_series_degenerates(self):
        with pytest.warns(UserWarning, match="constant"):
            model = fit_ar(np.full(300, 2.5), max_order=5)
        assert model.order == 0
        assert model.innovation_variance == condnorm.ar.VAR_FLOOR

    def test_insufficient_rows(self):
        with pytest.raises(EstimationError):
            fit_ar(np.ones(30) + np.arange(30), max_order=10)

    def test_tie_break_prefers_smaller_order(self, monkeypatch):
        monkeypatch.setattr(condnorm.ar, "_aicc", lambda n, p, s2: 42.0)
        x = ar_path([0.8], 800, seed=1)
        assert fit_ar(x, max_order=6).order == 0

    def test_nonstationary_fit_shrunk(self):
        rng = np.random.default_rng(8)
        t = np.arange(400.0)
        x = 1.02**t + 0.1 * rng.standard_normal(400)  # explosive growth
        with pytest.warns(UserWarning, match="non-stationary"):
            model = fit_ar(x, max_order=2)
        assert model.spectral_radius() < 1.0


class TestKalmanSmooth:
    def test_identity_without_missing(self):
        x = ar_path([0.5], 200, seed=2)
        model = ArModel(order=1, mean=0.0, coefficients=[0.5], innovation_variance=1.0, aicc=0.0)
        means, variances = kalman_smooth(x, None, model)
        assert np.array_equal(means, x)
        assert np.all(variances == 0.0)

    def test_single_gap_closed_form(self):
        psi = 0.8
        model = ArModel(order=1, mean=0.0, coefficients=[psi], innovation_variance=1.0, aicc=0.0)
        x = ar_path([psi], 50, seed=4)
        mask = np.zeros(50, bool)
        mask[20] = True
        means, _ = kalman_smooth(x, mask, model)
        expected = psi * (x[19] + x[21]) / (1 + psi**2)
        assert abs(means[20] - expected) < 1e-8

    @pytest.mark.parametrize(
        "coeffs,s2,mean", [([0.8], 1.0, 0.0), ([0.5, 0.3], 0.7, 2.0)]
    )
    def test_dense_conditioning_oracle(self, coeffs, s2, mean):
        n = 30
        model = ArModel(
            order=len(coeffs), mean=mean, coefficients=coeffs, innovation_variance=s2, aicc=0.0
        )
        x = ar_path(coeffs, n, seed=6, innovation_sd=np.sqrt(s2), mean=mean)
        rng = np.random.default_rng(7)
        mask = rng.random(n) < 0.2
        mask[:3] = True  # leading run exercises the backcast
        mask[-1] = False
        means, _ = kalman_smooth(x, mask, model)
        cov = dense_ar_covariance(coeffs, s2, n)
        oracle = oracle_gaussian_condition(
            cov, np.flatnonzero(~mask), x[~mask] - mean, mean=None
        )
        assert np.max(np.abs(means[mask] - (oracle[mask] + mean))) < 1e-6

    def test_smoothed_variance_never_exceeds_filtered(self):
        model = ArModel(order=2, mean=0.0, coefficients=[0.5, 0.2], innovation_variance=1.0, aicc=0.0)
        x = ar_path([0.5, 0.2], 120, seed=9)
        rng = np.random.default_rng(10)
        mask = rng.random(120) < 0.3
        means, svar, fmean, fvar = kalman_smooth(x, mask, model, return_filtered=True)
        assert np.all(svar <= fvar + 1e-10)

    def test_nonstationary_model_rejected(self):
        model = ArModel(order=1, mean=0.0, coefficients=[1.1], innovation_variance=1.0, aicc=0.0)
        with pytest.raises(ContractError):
            kalman_smooth(np.ones(10), None, model)

    def test_order_zero_model(self):
        model = ArModel(order=0, mean=3.0, coefficients=[], innovation_variance=2.0, aicc=0.0)
        x = np.array([2.0, np.nan, 4.0])
        means, variances = kalman_smooth(x, None, model)
        assert means[1] == pytest.approx(3.0)
        assert variances[1] == pytest.approx(2.0)


@pytest.fixture(scope="module")
def masked_fixture():
    spec = SimSpec(
        n=1500,
        seed=77,
        mean="sine",
        variance="exp",
        noise="ar",
        ar_coefficients=(0.6, 0.2),
        missing_rate=0.1,
    )
    return simulate(spec)


class TestImputeSeries:
    def test_no_missing_is_identity(self):
        spec = SimSpec(n=400, seed=1, mean="linear", variance="constant")
        _, y, Z, _ = simulate(spec)
        result = impute_series(y, Z, BasisSpec(dimension=8), max_order=4)
        assert np.array_equal(result.series.values, y.values)
        assert not result.imputed.any()

    def test_observed_values_untouched(self, masked_fixture):
        _, y, Z, _ = masked_fixture
        result = impute_series(y, Z, BasisSpec(dimension=10), max_order=6)
        obs = ~y.mask
        assert np.array_equal(result.series.values[obs], y.values[obs])
        assert np.array_equal(result.imputed, y.mask)  # covariates fully observed here
        assert not result.series.mask.any()

    def test_pipeline_close_to_true_parameter_oracle(self, masked_fixture):
        _, y, Z, truth = masked_fixture
        result = impute_series(y, Z, BasisSpec(dimension=10), max_order=6)
        hidden = y.mask
        rmse = np.sqrt(np.mean((result.series.values[hidden] - truth.y_full[hidden]) ** 2))

        # oracle: same smoother fed the true mean/variance/AR parameters
        e_obs = (y.values - truth.mean) / np.sqrt(truth.variance)
        oracle_ar = ArModel(
            order=2,
            mean=0.0,
            coefficients=truth.ar_coefficients,
            innovation_variance=truth.innovation_sd**2,
            aicc=0.0,
        )
        smoothed, _ = kalman_smooth(e_obs, y.mask, oracle_ar)
        oracle_fill = smoothed * np.sqrt(truth.variance) + truth.mean
        oracle_rmse = np.sqrt(np.mean((oracle_fill[hidden] - truth.y_full[hidden]) ** 2))
        assert rmse <= 1.25 * oracle_rmse

    def test_intervals_bracket_point(self, masked_fixture):
        _, y, Z, _ = masked_fixture
        result = impute_series(y, Z, BasisSpec(dimension=10), max_order=6)
        fill = result.imputed
        assert np.all(result.lower95[fill] <= result.series.values[fill])
        assert np.all(result.series.values[fill] <= result.upper95[fill])

    def test_leading_gap_backcast_is_sane(self):
        spec = SimSpec(n=800, seed=13, mean="linear", variance="constant", noise="ar", ar_coefficients=(0.7,))
        _, y, Z, _ = simulate(spec)
        mask = y.mask.copy()
        mask[:25] = True
        result = impute_series(y.replace(mask=mask), Z, BasisSpec(dimension=8), max_order=4)
        filled = result.series.values[:25]
        sd = np.std(y.values[~mask])
        assert np.isfinite(filled).all()
        assert np.all(np.abs(filled - y.values[~mask].mean()) < 5 * sd)

    def test_nonnegative_filter_remasks(self):
        spec = SimSpec(n=600, seed=3, mean="constant", variance="constant", missing_rate=0.15)
        _, y, Z, _ = simulate(spec)
        plain = TimeSeriesImputer(specs=BasisSpec(dimension=8), max_order=3).fit_transform(y, Z)
        negatives = plain.imputed & (plain.series.values < 0)
        assert negatives.any()  # zero-mean series: some fills are negative
        filtered = TimeSeriesImputer(
            specs=BasisSpec(dimension=8), max_order=3, nonnegative=True
        ).fit_transform(y, Z)
        assert filtered.n_negative_removed == int(negatives.sum())
        assert filtered.series.mask[negatives].all()

    def test_missing_covariate_positions_stay_masked(self):
        spec = SimSpec(n=400, seed=9, mean="linear", variance="constant", missing_rate=0.1)
        _, y, Z, _ = simulate(spec)
        zmask = Z.mask.copy()
        hole = np.flatnonzero(y.mask)[0]
        zmask[hole, 0] = True
        Z2 = type(Z)(Z.timestamps, Z.names, Z.values, zmask, delta=Z.delta)
        result = impute_series(y, Z2, BasisSpec(dimension=8), max_order=3)
        assert result.series.mask[hole]
        assert not result.imputed[hole]
