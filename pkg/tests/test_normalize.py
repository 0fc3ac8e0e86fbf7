import numpy as np
import pytest

from condnorm import (
    AdditiveModel,
    BasisSpec,
    ConditionalNormalizer,
    CovariateSet,
    FitError,
    SchemaError,
    SimSpec,
    TimeSeries,
    normalize,
    simulate,
    unnormalize,
)


def intercept_model(family, names, intercept):
    """Hand-built model: every smooth dropped, so predictions are constant."""
    state = {
        "model": "additive",
        "family": family,
        "terms": [
            {
                "name": name,
                "kind": "natural_cubic",
                "dimension": 10,
                "knot_rule": "quantile",
                "lo": None,
                "hi": None,
                "fixed_lambda": None,
                "lambda": 0.0,
                "dropped": True,
                "center": 0.0,
            }
            for name in names
        ],
        "coefficients": [float(intercept)],
        "coef_covariance": [[0.0]],
        "lambdas": [0.0] * len(names),
        "dispersion": 1.0,
        "shape": None,
        "edf": 1.0,
        "gcv": 0.0,
        "deviance": 0.0,
        "feature_names": list(names),
        "sweeps": 2,
        "max_iter": 200,
        "tol": 1e-8,
    }
    return AdditiveModel.from_dict(state)


@pytest.fixture(scope="module")
def sine_fit():
    spec = SimSpec(n=2000, seed=101, mean="sine", variance="constant", var_scale=0.01)
    _, y, Z, truth = simulate(spec)
    normalizer = ConditionalNormalizer(specs=BasisSpec(dimension=10)).fit(y, Z)
    return y, Z, truth, normalizer


class TestFitting:
    def test_mean_model_recovers_sine(self, sine_fit):
        _, _, _, normalizer = sine_fit
        grid = np.linspace(-0.9, 0.9, 200)[:, None]
        fitted = normalizer.mean_model_.predict(grid)
        rmse = np.sqrt(np.mean((fitted - 2.0 * np.sin(grid[:, 0])) ** 2))
        assert rmse < 0.1

    def test_homoskedastic_variance_nearly_flat(self):
        spec = SimSpec(n=3000, seed=7, mean="linear", variance="constant", var_scale=1.0)
        _, y, Z, _ = simulate(spec)
        normalizer = ConditionalNormalizer(specs=BasisSpec(dimension=10)).fit(y, Z)
        grid = np.linspace(-0.95, 0.95, 100)[:, None]
        v = normalizer.var_model_.predict(grid)
        assert v.max() / v.min() < 2.0

    def test_exp_variance_slope_recovered(self):
        spec = SimSpec(n=5000, seed=21, mean="linear", variance="exp")
        _, y, Z, _ = simulate(spec)
        normalizer = ConditionalNormalizer(specs=BasisSpec(dimension=10)).fit(y, Z)
        zmin, zmax = Z.values[:, 0].min(), Z.values[:, 0].max()
        width = zmax - zmin
        grid = np.linspace(zmin + 0.1 * width, zmax - 0.1 * width, 200)
        logv = np.log(normalizer.var_model_.predict(grid[:, None]))
        slope = np.polyfit(grid, logv, 1)[0]
        assert 0.7 < slope < 1.3

    def test_too_few_rows(self):
        ts = 300 * np.arange(60)
        mask = np.ones(60, bool)
        mask[:20] = False
        y = TimeSeries(name="y", timestamps=ts, values=np.ones(60), mask=mask, delta=300)
        Z = CovariateSet(timestamps=ts, names=("z",), values=np.linspace(0, 1, 60)[:, None])
        with pytest.raises(FitError):
            ConditionalNormalizer(specs=BasisSpec(dimension=5)).fit(y, Z)


class TestNormalize:
    def test_identity_models_passthrough(self):
        ts = 300 * np.arange(100)
        rng = np.random.default_rng(0)
        y = TimeSeries(name="y", timestamps=ts, values=rng.standard_normal(100), delta=300)
        Z = CovariateSet(timestamps=ts, names=("z",), values=rng.uniform(0, 1, (100, 1)))
        mean_model = intercept_model("gaussian_identity", ["z"], 0.0)
        var_model = intercept_model("gamma_log", ["z"], 0.0)  # exp(0) = 1
        out = normalize(y, Z, mean_model, var_model)
        assert np.allclose(out.values, y.values)

    def test_exact_mean_gives_zero(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        mean, _ = normalizer._moments(Z)
        exact = y.replace(values=mean)
        out = normalizer.transform(exact, Z)
        assert np.max(np.abs(out.values[~out.mask])) < 1e-12

    def test_self_normalization_moments(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        out = normalizer.transform(y, Z)
        vals = out.values[~out.mask]
        assert -0.1 < vals.mean() < 0.1
        assert 0.7 < vals.var() < 1.3

    def test_mask_propagation(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        mask = np.zeros(len(y), bool)
        mask[5] = True
        zmask = Z.mask.copy()
        zmask[11, 0] = True
        out = normalizer.transform(
            y.replace(mask=y.mask | mask),
            CovariateSet(Z.timestamps, Z.names, Z.values, zmask, delta=Z.delta),
        )
        assert out.mask[5] and out.mask[11]
        expected = (y.mask | mask) | zmask[:, 0]
        assert np.array_equal(out.mask, expected)

    def test_monotone_in_response(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        bumped = y.replace(values=y.values + 0.5)
        base = normalizer.transform(y, Z)
        up = normalizer.transform(bumped, Z)
        ok = ~base.mask
        assert np.all(up.values[ok] > base.values[ok])

    def test_schema_mismatch(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        renamed = CovariateSet(Z.timestamps, ("w",), Z.values, Z.mask, delta=Z.delta)
        with pytest.raises(SchemaError):
            normalizer.transform(y, renamed)

    def test_variance_floor_respected(self):
        ts = 300 * np.arange(80)
        rng = np.random.default_rng(1)
        y = TimeSeries(name="y", timestamps=ts, values=rng.standard_normal(80), delta=300)
        Z = CovariateSet(timestamps=ts, names=("z",), values=rng.uniform(0, 1, (80, 1)))
        mean_model = intercept_model("gaussian_identity", ["z"], 0.0)
        tiny_var = intercept_model("gamma_log", ["z"], -100.0)  # exp(-100) ~ 4e-44
        out = normalize(y, Z, mean_model, tiny_var, var_floor=0.25)
        assert np.all(out.variance >= 0.25)
        assert np.allclose(out.values, y.values / 0.5)


class TestUnnormalize:
    def test_roundtrip_identity(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        out = normalizer.transform(y, Z)
        back = normalizer.inverse_transform(out.values, Z)
        ok = ~out.mask
        assert np.max(np.abs(back[ok] - y.values[ok])) < 1e-10

    def test_zero_maps_to_mean(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        back = normalizer.inverse_transform(np.zeros(len(y)), Z)
        mean, _ = normalizer._moments(Z)
        assert np.allclose(back, mean)

    def test_unit_value_arithmetic(self):
        ts = 300 * np.arange(4)
        Z = CovariateSet(timestamps=ts, names=("z",), values=np.zeros((4, 1)))
        mean_model = intercept_model("gaussian_identity", ["z"], 3.0)
        var_model = intercept_model("gamma_log", ["z"], np.log(4.0))
        out = unnormalize(np.ones(4), Z, mean_model, var_model)
        assert np.allclose(out, 5.0)

    def test_functional_roundtrip(self, sine_fit):
        y, Z, _, normalizer = sine_fit
        mean_model, var_model = normalizer.mean_model_, normalizer.var_model_
        out = normalize(y, Z, mean_model, var_model, var_floor=normalizer.var_floor_)
        back = unnormalize(out.values, Z, mean_model, var_model, var_floor=normalizer.var_floor_)
        ok = ~out.mask
        assert np.max(np.abs(back[ok] - y.values[ok])) < 1e-10
