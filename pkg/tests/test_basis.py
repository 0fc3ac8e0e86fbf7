import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from condnorm import BasisError, BasisSpec, build_basis, fourier_terms, make_basis


def quadrature_penalty(knots, n_points=10_000):
    """Independent oracle: integrate products of second derivatives of the
    scipy natural-spline interpolants of unit vectors, interval by interval."""
    k = knots.size
    d2 = [CubicSpline(knots, np.eye(k)[j], bc_type="natural").derivative(2) for j in range(k)]
    per_interval = max(n_points // (k - 1), 8)
    s = np.zeros((k, k))
    for a, b in zip(knots[:-1], knots[1:]):
        grid = np.linspace(a, b, per_interval | 1)  # odd count for Simpson
        vals = np.array([f(grid) for f in d2])
        for i in range(k):
            for j in range(k):
                s[i, j] += simpson(vals[i] * vals[j], x=grid)
    return s


class TestNaturalCubic:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.x = rng.uniform(-2.0, 3.0, 120)
        self.spec = BasisSpec(kind="natural_cubic", dimension=8)
        self.built = build_basis(self.spec, self.x)

    def test_linear_function_reproduced_exactly(self):
        basis = self.built.basis
        coef = 2.0 * basis.knots  # knot values of y = 2x
        grid = np.linspace(-4.0, 5.0, 300)  # includes extrapolation range
        assert np.max(np.abs(basis.evaluate(grid) @ coef - 2.0 * grid)) < 1e-10

    def test_linear_coefficients_have_zero_penalty(self):
        basis = self.built.basis
        coef = 1.5 + 2.0 * basis.knots
        assert abs(coef @ self.built.penalty @ coef) < 1e-8

    def test_penalty_matches_quadrature_oracle(self):
        oracle = quadrature_penalty(self.built.basis.knots)
        assert np.max(np.abs(self.built.penalty - oracle)) < 1e-6

    def test_penalty_psd(self):
        assert np.linalg.eigvalsh(self.built.penalty).min() >= -1e-10

    def test_evaluation_matches_scipy_interpolant(self):
        basis = self.built.basis
        knots = basis.knots
        grid = np.linspace(knots[0], knots[-1], 97)
        B = basis.evaluate(grid)
        for j in range(knots.size):
            cs = CubicSpline(knots, np.eye(knots.size)[j], bc_type="natural")
            assert np.max(np.abs(B[:, j] - cs(grid))) < 1e-10

    def test_shift_consistency(self):
        spec = BasisSpec(kind="natural_cubic", dimension=6, knot_rule="uniform")
        x = np.linspace(0.0, 16.0, 50)
        b1 = build_basis(spec, x).matrix
        b2 = build_basis(spec, x + 512.0).matrix
        assert np.max(np.abs(b1 - b2)) < 1e-9

    def test_too_few_distinct_values(self):
        with pytest.raises(BasisError):
            build_basis(BasisSpec(dimension=8), np.array([1.0, 2.0, 3.0] * 10))


class TestCubicBspline:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.x = rng.uniform(0.0, 1.0, 200)
        self.spec = BasisSpec(kind="cubic_bspline", dimension=9)
        self.built = build_basis(self.spec, self.x)

    def test_partition_of_unity(self):
        grid = np.linspace(self.x.min(), self.x.max(), 257)
        rows = self.built.basis.evaluate(grid)
        assert np.max(np.abs(rows.sum(axis=1) - 1.0)) < 1e-12

    def test_penalty_psd_and_zero_on_linear(self):
        penalty = self.built.penalty
        assert np.linalg.eigvalsh(penalty).min() >= -1e-10
        grid = np.linspace(self.x.min(), self.x.max(), 400)
        rows = self.built.basis.evaluate(grid)
        coef, *_ = np.linalg.lstsq(rows, 1.0 + 2.0 * grid, rcond=None)
        assert np.max(np.abs(rows @ coef - (1.0 + 2.0 * grid))) < 1e-8
        assert abs(coef @ penalty @ coef) < 1e-8

    def test_linear_extrapolation(self):
        basis = self.built.basis
        lo = self.x.min()
        left = basis.evaluate(np.array([lo - 0.5]))
        anchor = basis.evaluate(np.array([lo]))
        step = basis.evaluate(np.array([lo - 1.0])) - left
        assert np.allclose(left - anchor, step, atol=1e-10)  # constant slope outside

    def test_dimension_floor(self):
        with pytest.raises(ValueError):
            BasisSpec(kind="cubic_bspline", dimension=3)


class TestSpecValidation:
    def test_bad_kind(self):
        with pytest.raises(ValueError):
            BasisSpec(kind="thin_plate")

    def test_bad_range(self):
        with pytest.raises(ValueError):
            BasisSpec(lo=1.0, hi=1.0)

    def test_uniform_knots(self):
        basis = make_basis(BasisSpec(knot_rule="uniform", dimension=5, lo=0.0, hi=1.0), np.array([0.2, 0.7]))
        assert np.allclose(basis.knots, np.linspace(0.0, 1.0, 5))


class TestFourier:
    def test_period_point(self):
        terms = fourier_terms(np.array([73.0]), 73, 1)
        assert abs(terms.matrix[0, 0]) < 1e-12  # sin at a full period
        assert terms.matrix[0, 1] == pytest.approx(1.0)

    def test_quarter_period_values(self):
        terms = fourier_terms(np.array([1.0, 2.0, 3.0, 4.0]), 4, 1)
        assert np.allclose(terms.matrix[:, 0], [1.0, 0.0, -1.0, 0.0], atol=1e-12)
        assert np.allclose(terms.matrix[:, 1], [0.0, -1.0, 0.0, 1.0], atol=1e-12)

    def test_orthogonality_over_full_period(self):
        terms = fourier_terms(np.arange(1.0, 74.0), 73, 5)
        m = terms.matrix
        assert np.max(np.abs(m.mean(axis=0))) < 1e-12
        gram = m.T @ m
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) < 1e-9

    def test_column_order_and_bounds(self):
        terms = fourier_terms(np.arange(50.0), 24, 3)
        assert terms.column_names == ("sin_1", "cos_1", "sin_2", "cos_2", "sin_3", "cos_3")
        assert np.all(np.abs(terms.matrix) <= 1.0)

    def test_nyquist_guard(self):
        with pytest.raises(ValueError):
            fourier_terms(np.arange(10.0), 10, 5)


@settings(deadline=None, max_examples=20)
@given(
    seed=st.integers(0, 2**31),
    kind=st.sampled_from(["natural_cubic", "cubic_bspline"]),
    k=st.integers(5, 12),
)
def test_penalty_always_psd(seed, kind, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=80)
    built = build_basis(BasisSpec(kind=kind, dimension=k), x)
    assert np.linalg.eigvalsh(built.penalty).min() >= -1e-10
    assert np.isfinite(built.matrix).all()
