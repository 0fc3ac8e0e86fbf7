"""Smooth-function bases with quadratic roughness penalties.

Two spline families are provided: natural cubic splines parameterized by
their values at the knots (the cardinal basis), and clamped cubic
B-splines. Both expose an evaluation matrix and the integrated
squared-second-derivative penalty. Evaluation outside the knot range
extends linearly from the boundary, matching natural-spline behavior.
Harmonic (sin/cos) covariate columns live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import BasisError


@dataclass(frozen=True)
class BasisSpec:
    """How to build the smooth term for one covariate.

    kind: ``natural_cubic``, ``cubic_bspline`` or ``linear`` (a plain
        unpenalized column).
    dimension: number of basis functions (ignored for ``linear``).
    knot_rule: ``quantile`` places knots at quantiles of the training
        values, ``uniform`` spaces them evenly over the range.
    lo, hi: covariate range; defaults to the training data range.
    fixed_lambda: pin the smoothing parameter instead of selecting it by
        generalized cross-validation.
    """

    kind: str = "natural_cubic"
    dimension: int = 10
    knot_rule: str = "quantile"
    lo: float | None = None
    hi: float | None = None
    fixed_lambda: float | None = None

    def __post_init__(self):
        if self.kind not in ("natural_cubic", "cubic_bspline", "linear"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.knot_rule not in ("quantile", "uniform"):
            raise ValueError(f"unknown knot rule {self.knot_rule!r}")
        if self.kind == "natural_cubic" and self.dimension < 3:
            raise ValueError("natural cubic bases need dimension >= 3")
        if self.kind == "cubic_bspline" and self.dimension < 4:
            raise ValueError("cubic B-spline bases need dimension >= 4")
        if self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise ValueError("basis range must satisfy lo < hi")
        if self.fixed_lambda is not None and self.fixed_lambda < 0:
            raise ValueError("fixed_lambda must be nonnegative")


class NaturalCubicBasis:
    """Cardinal natural cubic splines on a fixed knot vector.

    Basis function j interpolates the j-th unit vector at the knots with
    natural (zero second derivative) boundary conditions. The penalty is
    the exact Gram matrix of second derivatives, whose null space holds
    constants and linear functions.
    """

    kind = "natural_cubic"

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=np.float64)
        if knots.ndim != 1 or knots.size < 3:
            raise BasisError("natural cubic basis needs at least 3 knots")
        if np.any(np.diff(knots) <= 0):
            raise BasisError("knots must be strictly increasing")
        self.knots = knots
        k = knots.size
        h = np.diff(knots)
        q = np.zeros((k, k - 2))
        r = np.zeros((k - 2, k - 2))
        for j in range(1, k - 1):
            c = j - 1
            q[j - 1, c] = 1.0 / h[j - 1]
            q[j, c] = -(1.0 / h[j - 1] + 1.0 / h[j])
            q[j + 1, c] = 1.0 / h[j]
            r[c, c] = (h[j - 1] + h[j]) / 3.0
            if j < k - 2:
                r[c, c + 1] = h[j] / 6.0
                r[c + 1, c] = h[j] / 6.0
        # second derivatives at the knots of each cardinal basis function
        self._f2 = np.zeros((k, k))
        self._f2[1:-1, :] = np.linalg.solve(r, q.T)
        self._h = h

    @property
    def dimension(self) -> int:
        return self.knots.size

    def penalty(self) -> np.ndarray:
        s = self._h_weighted_gram()
        return (s + s.T) / 2.0

    def _h_weighted_gram(self) -> np.ndarray:
        # int f''g'' over each interval of two linear functions:
        # h/6 * (2 a_i b_i + a_i b_{i+1} + a_{i+1} b_i + 2 a_{i+1} b_{i+1})
        f2 = self._f2
        s = np.zeros((f2.shape[1],) * 2)
        for i, h in enumerate(self._h):
            a, b = f2[i], f2[i + 1]
            s += (h / 6.0) * (2 * np.outer(a, a) + np.outer(a, b) + np.outer(b, a) + 2 * np.outer(b, b))
        return s

    def _eval_inside(self, x):
        knots, f2 = self.knots, self._f2
        idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, knots.size - 2)
        h = self._h[idx]
        wr = (x - knots[idx]) / h
        wl = 1.0 - wr
        n, k = x.size, knots.size
        rows = np.zeros((n, k))
        rows[np.arange(n), idx] += wl
        rows[np.arange(n), idx + 1] += wr
        corr = (h * h / 6.0) * wl * wr
        rows -= (corr * (1.0 + wl))[:, None] * f2[idx]
        rows -= (corr * (1.0 + wr))[:, None] * f2[idx + 1]
        return rows

    def _deriv_inside(self, x):
        knots, f2 = self.knots, self._f2
        idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, knots.size - 2)
        h = self._h[idx]
        wr = (x - knots[idx]) / h
        n, k = x.size, knots.size
        rows = np.zeros((n, k))
        rows[np.arange(n), idx] -= 1.0 / h
        rows[np.arange(n), idx + 1] += 1.0 / h
        rows -= ((h / 6.0) * (2.0 - 6.0 * wr + 3.0 * wr * wr))[:, None] * f2[idx]
        rows -= ((h / 6.0) * (1.0 - 3.0 * wr * wr))[:, None] * f2[idx + 1]
        return rows

    def evaluate(self, x) -> np.ndarray:
        """Evaluate all basis functions at x; linear outside the knot range."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        xc = np.clip(x, self.knots[0], self.knots[-1])
        rows = self._eval_inside(xc)
        outside = x != xc
        if outside.any():
            rows[outside] += (x[outside] - xc[outside])[:, None] * self._deriv_inside(xc[outside])
        return rows


class CubicBSplineBasis:
    """Clamped cubic B-splines (partition of unity on the knot range)."""

    kind = "cubic_bspline"

    def __init__(self, lo, hi, interior_knots):
        interior = np.asarray(interior_knots, dtype=np.float64)
        if interior.size and (
            np.any(np.diff(interior) <= 0) or interior[0] <= lo or interior[-1] >= hi
        ):
            raise BasisError("interior knots must be strictly increasing inside (lo, hi)")
        if not lo < hi:
            raise BasisError("basis range must satisfy lo < hi")
        self.knots = np.concatenate([[lo] * 4, interior, [hi] * 4])
        self._spl = BSpline(self.knots, np.eye(self.dimension), 3, extrapolate=True)
        self._d1 = self._spl.derivative(1)

    @property
    def dimension(self) -> int:
        return self.knots.size - 4

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        lo, hi = self.knots[0], self.knots[-1]
        xc = np.clip(x, lo, hi)
        rows = self._spl(xc)
        outside = x != xc
        if outside.any():
            rows[outside] += (x[outside] - xc[outside])[:, None] * self._d1(xc[outside])
        return rows

    def penalty(self) -> np.ndarray:
        # second derivatives are piecewise linear, so 2-point Gauss-Legendre
        # per inter-knot span integrates their products exactly
        d2 = self._spl.derivative(2)
        spans = np.unique(self.knots)
        s = np.zeros((self.dimension,) * 2)
        offset = 0.5 / np.sqrt(3.0)
        for a, b in zip(spans[:-1], spans[1:]):
            mid, half = (a + b) / 2.0, (b - a) / 2.0
            for node in (mid - offset * (b - a), mid + offset * (b - a)):
                g = d2(np.asarray([node]))[0]
                s += half * np.outer(g, g)
        return (s + s.T) / 2.0


def _pick_knots(spec: BasisSpec, x: np.ndarray):
    lo = float(np.min(x)) if spec.lo is None else float(spec.lo)
    hi = float(np.max(x)) if spec.hi is None else float(spec.hi)
    if not lo < hi:
        raise BasisError(f"degenerate covariate range [{lo}, {hi}]")
    k = spec.dimension
    if spec.kind == "natural_cubic":
        if spec.knot_rule == "uniform":
            return lo, hi, np.linspace(lo, hi, k)
        xin = x[(x >= lo) & (x <= hi)]
        if np.unique(xin).size < k:
            raise BasisError(
                f"need at least {k} distinct covariate values for quantile knots"
            )
        knots = np.quantile(xin, np.linspace(0.0, 1.0, k))
        knots[0], knots[-1] = lo, hi
        if np.unique(knots).size < k:
            raise BasisError("quantile knots collapsed; reduce the basis dimension")
        return lo, hi, knots
    # cubic_bspline: k - 4 interior knots
    n_int = k - 4
    if spec.knot_rule == "uniform" or n_int == 0:
        interior = np.linspace(lo, hi, n_int + 2)[1:-1]
    else:
        xin = x[(x > lo) & (x < hi)]
        if np.unique(xin).size < n_int:
            raise BasisError(
                f"need at least {n_int} distinct interior covariate values for quantile knots"
            )
        interior = np.quantile(xin, (np.arange(n_int) + 1.0) / (n_int + 1.0))
        if np.unique(interior).size < n_int or (interior <= lo).any() or (interior >= hi).any():
            raise BasisError("quantile knots collapsed; reduce the basis dimension")
    return lo, hi, interior


def make_basis(spec: BasisSpec, x):
    """Build the reusable basis object for one covariate from training values."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise BasisError("covariate values must be finite")
    if spec.kind == "linear":
        raise ValueError("linear terms have no spline basis")
    lo, hi, knots = _pick_knots(spec, x)
    if spec.kind == "natural_cubic":
        return NaturalCubicBasis(knots)
    return CubicBSplineBasis(lo, hi, knots)


@dataclass(frozen=True)
class BasisMatrix:
    """Evaluated basis: design block ``matrix`` (n, k) and penalty (k, k)."""

    matrix: np.ndarray
    penalty: np.ndarray
    basis: object


def build_basis(spec: BasisSpec, x) -> BasisMatrix:
    """Evaluate a fresh basis for ``x`` and return it with its penalty."""
    basis = make_basis(spec, x)
    x = np.asarray(x, dtype=np.float64)
    return BasisMatrix(matrix=basis.evaluate(x), penalty=basis.penalty(), basis=basis)


@dataclass(frozen=True)
class FourierTerms:
    """Harmonic covariate columns sin(2*pi*t*k/m), cos(2*pi*t*k/m)."""

    matrix: np.ndarray
    period: float
    pairs: int

    @property
    def column_names(self):
        return tuple(
            f"{fn}_{k}" for k in range(1, self.pairs + 1) for fn in ("sin", "cos")
        )


def fourier_terms(t, period, pairs: int) -> FourierTerms:
    """First ``pairs`` harmonic pairs of a seasonal period evaluated at t."""
    t = np.asarray(t, dtype=np.float64)
    if period <= 0:
        raise ValueError("period must be positive")
    if not 2 * pairs < period:
        raise ValueError("need 2*pairs < period to keep harmonics below Nyquist")
    if pairs < 1:
        raise ValueError("pairs must be at least 1")
    cols = []
    for k in range(1, pairs + 1):
        phase = 2.0 * np.pi * k * t / period
        cols.append(np.sin(phase))
        cols.append(np.cos(phase))
    return FourierTerms(matrix=np.column_stack(cols), period=float(period), pairs=int(pairs))
