"""Additive models fit by penalized iteratively reweighted least squares.

Three response families cover the package's needs: Gaussian with identity
link (conditional means), Gamma with log link (conditional variances fit
to squared residuals), and Gaussian with a bounded correlation link
(conditional auto/cross-correlations). Smoothing parameters are chosen by
generalized cross-validation over a log-spaced grid, coordinate-wise.

Each smooth is made identifiable by absorbing a sum-to-zero constraint:
the raw basis is reparameterized onto the orthogonal complement of its
training column means, so fitted smooths average zero over the training
rows and the intercept is free. Without this the penalized system is
exactly singular (the constant direction is invisible to both the data
and the roughness penalty).
"""

from __future__ import annotations

import json
import warnings

import numpy as np
from scipy.linalg import null_space
from sklearn.base import BaseEstimator

from .basis import BasisSpec, CubicBSplineBasis, NaturalCubicBasis, make_basis
from .errors import FitError

LAMBDA_GRID = np.logspace(-6.0, 6.0, 30)
_CORR_CLAMP = 1.0 - 1e-8
_MU_CLAMP = 1.0 - 1e-12
GAMMA_RESPONSE_FLOOR = 1e-10


def corr_link(c):
    """Map a correlation in (-1, 1) to the real line: log((1+c)/(1-c))."""
    c = np.clip(c, -_CORR_CLAMP, _CORR_CLAMP)
    return np.log1p(c) - np.log1p(-c)


def corr_link_inv(u):
    """Inverse correlation link (exp(u)-1)/(exp(u)+1); stable for large |u|."""
    return np.tanh(np.asarray(u, dtype=np.float64) / 2.0)


class _Gaussian:
    name = "gaussian_identity"

    @staticmethod
    def initialize(y):
        return y.astype(np.float64, copy=True)

    @staticmethod
    def link(mu):
        return mu

    @staticmethod
    def linkinv(eta):
        return eta

    @staticmethod
    def dlink(mu):
        return np.ones_like(mu)

    @staticmethod
    def variance(mu):
        return np.ones_like(mu)

    @staticmethod
    def deviance(y, mu, w):
        return float(np.sum(w * (y - mu) ** 2))

    @staticmethod
    def prepare(y):
        return y

    @staticmethod
    def pearson(y, mu, w):
        return float(np.sum(w * (y - mu) ** 2))


class _GammaLog:
    name = "gamma_log"

    @staticmethod
    def initialize(y):
        return y.astype(np.float64, copy=True)

    @staticmethod
    def link(mu):
        return np.log(mu)

    @staticmethod
    def linkinv(eta):
        return np.exp(np.clip(eta, -700.0, 700.0))

    @staticmethod
    def dlink(mu):
        return 1.0 / mu

    @staticmethod
    def variance(mu):
        return mu * mu

    @staticmethod
    def deviance(y, mu, w):
        return float(2.0 * np.sum(w * (-np.log(y / mu) + (y - mu) / mu)))

    @staticmethod
    def prepare(y):
        # squared residuals of an exact fit can be zero; keep the support open
        return np.maximum(y, GAMMA_RESPONSE_FLOOR)

    @staticmethod
    def pearson(y, mu, w):
        return float(np.sum(w * ((y - mu) / mu) ** 2))


class _GaussianCorr:
    name = "gaussian_corr_link"

    @staticmethod
    def initialize(y):
        return np.clip(y, -_CORR_CLAMP, _CORR_CLAMP)

    @staticmethod
    def link(mu):
        return corr_link(mu)

    @staticmethod
    def linkinv(eta):
        return np.clip(np.tanh(np.asarray(eta) / 2.0), -_MU_CLAMP, _MU_CLAMP)

    @staticmethod
    def dlink(mu):
        return 2.0 / (1.0 - mu * mu)

    @staticmethod
    def variance(mu):
        return np.ones_like(mu)

    @staticmethod
    def deviance(y, mu, w):
        return float(np.sum(w * (y - mu) ** 2))

    @staticmethod
    def prepare(y):
        return y

    @staticmethod
    def pearson(y, mu, w):
        return float(np.sum(w * (y - mu) ** 2))


FAMILIES = {f.name: f for f in (_Gaussian, _GammaLog, _GaussianCorr)}


class _PirlsResult:
    __slots__ = ("theta", "eta", "mu", "weights", "penalized_deviance", "n_iter", "converged")

    def __init__(self, theta, eta, mu, weights, penalized_deviance, n_iter, converged):
        self.theta = theta
        self.eta = eta
        self.mu = mu
        self.weights = weights
        self.penalized_deviance = penalized_deviance
        self.n_iter = n_iter
        self.converged = converged


def _penalty_root(penalty):
    vals, vecs = np.linalg.eigh(penalty)
    keep = vals > max(vals.max(), 0.0) * 1e-15
    if not keep.any():
        return np.zeros((0, penalty.shape[0]))
    return np.sqrt(vals[keep])[:, None] * vecs[:, keep].T


def _pirls(design, y, prior_w, penalty, family, max_iter=200, tol=1e-8, theta0=None, quiet=False):
    theta = None
    if theta0 is None:
        mu = family.initialize(y)
        eta = family.link(mu)
    else:
        theta = np.asarray(theta0, dtype=np.float64)
        eta = design @ theta
        mu = family.linkinv(eta)
    # normal equations square the conditioning; fall back to an augmented
    # least-squares solve when the penalty dwarfs the data term
    data_scale = float(np.max(np.sum(design * design, axis=0)) * max(np.max(prior_w), 1.0))
    augmented = float(np.max(np.abs(penalty), initial=0.0)) > 1e6 * max(data_scale, 1.0)
    root = _penalty_root(penalty) if augmented else None
    pen_dev = np.inf
    warned = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        dl = family.dlink(mu)
        u = eta + (y - mu) * dl
        w = prior_w / (family.variance(mu) * dl * dl)
        if augmented:
            sw = np.sqrt(w)
            stacked = np.vstack([design * sw[:, None], root])
            rhs = np.concatenate([sw * u, np.zeros(root.shape[0])])
            theta_new, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
        else:
            xtw = design.T * w
            a = xtw @ design + penalty
            try:
                theta_new = np.linalg.solve(a, xtw @ u)
            except np.linalg.LinAlgError:
                theta_new, *_ = np.linalg.lstsq(a, xtw @ u, rcond=None)
        eta_new = design @ theta_new
        mu_new = family.linkinv(eta_new)
        pen_dev_new = family.deviance(y, mu_new, prior_w) + float(theta_new @ penalty @ theta_new)
        slack = tol * abs(pen_dev) + 1e-12 if np.isfinite(pen_dev) else np.inf
        if theta is not None and pen_dev_new > pen_dev + slack:
            for _ in range(12):
                theta_new = 0.5 * (theta_new + theta)
                eta_new = design @ theta_new
                mu_new = family.linkinv(eta_new)
                pen_dev_new = family.deviance(y, mu_new, prior_w) + float(
                    theta_new @ penalty @ theta_new
                )
                if pen_dev_new <= pen_dev + slack:
                    break
            if pen_dev_new > pen_dev + slack and not warned and not quiet:
                warnings.warn(
                    f"{family.name}: penalized deviance increased at iteration {it}",
                    stacklevel=3,
                )
                warned = True
        theta, eta, mu = theta_new, eta_new, mu_new
        if np.isfinite(pen_dev) and abs(pen_dev - pen_dev_new) <= tol * abs(pen_dev_new) + 1e-12:
            pen_dev = pen_dev_new
            converged = True
            break
        pen_dev = pen_dev_new
    dl = family.dlink(mu)
    w = prior_w / (family.variance(mu) * dl * dl)
    return _PirlsResult(theta, eta, mu, w, pen_dev, it, converged)


class _Term:
    """Fitted state of one covariate's contribution to the design."""

    __slots__ = ("name", "spec", "basis", "constraint", "center", "columns", "lam", "dropped")

    def __init__(self, name, spec, basis=None, constraint=None, center=0.0, lam=0.0, dropped=False):
        self.name = name
        self.spec = spec
        self.basis = basis
        self.constraint = constraint
        self.center = center
        self.columns = slice(0, 0)
        self.lam = lam
        self.dropped = dropped

    @property
    def n_columns(self):
        if self.dropped:
            return 0
        if self.spec.kind == "linear":
            return 1
        return self.constraint.shape[1]

    @property
    def penalized(self):
        return not self.dropped and self.spec.kind != "linear"

    def design_block(self, x):
        if self.dropped:
            return np.empty((x.size, 0))
        if self.spec.kind == "linear":
            return (x - self.center)[:, None]
        return self.basis.evaluate(x) @ self.constraint

    def penalty_block(self):
        if self.dropped or self.spec.kind == "linear":
            return np.zeros((self.n_columns, self.n_columns))
        s = self.constraint.T @ self.basis.penalty() @ self.constraint
        return (s + s.T) / 2.0


class AdditiveModel(BaseEstimator):
    """Penalized additive regression with smooth per-covariate terms.

    Parameters
    ----------
    specs : BasisSpec or sequence of BasisSpec
        One spec per covariate column (a single spec is broadcast). An
        empty sequence fits an intercept-only model.
    family : str
        ``gaussian_identity``, ``gamma_log`` or ``gaussian_corr_link``.
    sweeps : int
        Coordinate-descent passes over the per-smooth GCV grids.
    max_iter, tol : PIRLS iteration cap and relative deviance tolerance.
    """

    def __init__(self, specs=(), family="gaussian_identity", sweeps=2, max_iter=200, tol=1e-8):
        self.specs = specs
        self.family = family
        self.sweeps = sweeps
        self.max_iter = max_iter
        self.tol = tol

    def _family(self):
        try:
            return FAMILIES[self.family]
        except KeyError:
            raise ValueError(f"unknown family {self.family!r}") from None

    @staticmethod
    def _as_matrix(X, n_hint=None):
        if X is None:
            if n_hint is None:
                raise ValueError("X may be omitted only for intercept-only models with y given")
            return np.empty((n_hint, 0))
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        return X

    def fit(self, X, y, sample_weight=None, feature_names=None):
        family = self._family()
        y = np.asarray(y, dtype=np.float64).ravel()
        X = self._as_matrix(X, n_hint=y.size)
        n, p = X.shape
        if n != y.size:
            raise ValueError("X and y disagree on the number of rows")
        if not np.isfinite(X).all():
            raise ValueError("covariates must be finite (filter masked rows first)")
        if not np.isfinite(y).all():
            raise ValueError("response must be finite (filter masked rows first)")
        specs = self.specs
        if isinstance(specs, BasisSpec):
            specs = [specs] * p
        specs = list(specs)
        if len(specs) != p:
            raise ValueError(f"got {len(specs)} specs for {p} covariate columns")
        if n < 3 * p:
            raise FitError(f"need at least {3 * p} rows to fit {p} smooths, got {n}")
        if sample_weight is None:
            w = np.ones(n)
        else:
            w = np.asarray(sample_weight, dtype=np.float64).ravel()
            if w.size != n or (w < 0).any():
                raise ValueError("sample_weight must be nonnegative with one entry per row")
        y = family.prepare(y)
        if feature_names is None:
            feature_names = [f"x{j}" for j in range(p)]
        feature_names = [str(s) for s in feature_names]
        if len(feature_names) != p:
            raise ValueError("feature_names must match the number of covariate columns")

        terms = []
        for j, spec in enumerate(specs):
            xj = X[:, j]
            if np.min(xj) == np.max(xj):
                warnings.warn(
                    f"covariate {feature_names[j]!r} is constant; dropping its term",
                    stacklevel=2,
                )
                terms.append(_Term(feature_names[j], spec, dropped=True))
                continue
            if spec.kind == "linear":
                terms.append(_Term(feature_names[j], spec, center=float(xj.mean())))
                continue
            basis = make_basis(spec, xj)
            b = basis.evaluate(xj)
            cmeans = b.mean(axis=0)
            if np.linalg.norm(cmeans) < 1e-12:
                z = np.eye(b.shape[1])
            else:
                z = null_space(cmeans[None, :])
            terms.append(_Term(feature_names[j], spec, basis=basis, constraint=z))

        start = 1
        for t in terms:
            t.columns = slice(start, start + t.n_columns)
            start += t.n_columns
        design = np.empty((n, start))
        design[:, 0] = 1.0
        for j, t in enumerate(terms):
            design[:, t.columns] = t.design_block(X[:, j])
        blocks = [t.penalty_block() for t in terms]

        def assemble_penalty(lams):
            s = np.zeros((start, start))
            for t, blk, lam in zip(terms, blocks, lams):
                if t.penalized:
                    s[t.columns, t.columns] += lam * blk
            return s

        free = [i for i, t in enumerate(terms) if t.penalized and t.spec.fixed_lambda is None]
        lams = [
            (t.spec.fixed_lambda if t.spec.fixed_lambda is not None else 1.0) if t.penalized else 0.0
            for t in terms
        ]

        def score(lams_now, theta0):
            res = _pirls(
                design, y, w, assemble_penalty(lams_now), family,
                max_iter=self.max_iter, tol=self.tol, theta0=theta0, quiet=True,
            )
            if not res.converged:
                return np.inf, res
            gcv, _ = self._gcv(design, y, w, res, assemble_penalty(lams_now), family)
            return gcv, res

        theta_warm = None
        if free:
            for _ in range(self.sweeps):
                for i in free:
                    best, best_lam, best_theta = np.inf, lams[i], theta_warm
                    for lam in LAMBDA_GRID:
                        trial = list(lams)
                        trial[i] = lam
                        gcv, res = score(trial, theta_warm)
                        if gcv < best:
                            best, best_lam, best_theta = gcv, lam, res.theta
                    lams[i] = best_lam
                    theta_warm = best_theta

        penalty = assemble_penalty(lams)
        res = _pirls(
            design, y, w, penalty, family, max_iter=self.max_iter, tol=self.tol, theta0=theta_warm
        )
        if not res.converged:
            raise FitError(
                f"{family.name} fit did not converge in {self.max_iter} iterations "
                f"(penalized deviance {res.penalized_deviance:.6g})"
            )
        for t, lam in zip(terms, lams):
            t.lam = float(lam) if t.penalized else 0.0

        gcv, edf = self._gcv(design, y, w, res, penalty, family)
        deviance = family.deviance(y, res.mu, w)
        dof = max(n - edf, 1e-8)
        dispersion = family.pearson(y, res.mu, w) / dof
        a = (design.T * res.weights) @ design + penalty
        try:
            cov = np.linalg.inv(a) * dispersion
        except np.linalg.LinAlgError:
            cov = np.linalg.pinv(a) * dispersion

        self.terms_ = terms
        self.coefficients_ = res.theta
        self.intercept_ = float(res.theta[0])
        self.lambdas_ = np.asarray(lams, dtype=np.float64)
        self.fitted_values_ = res.mu
        self.linear_predictor_ = res.eta
        self.deviance_ = deviance
        self.penalized_deviance_ = res.penalized_deviance
        self.edf_ = edf
        self.gcv_score_ = gcv
        self.dispersion_ = dispersion
        self.shape_ = 1.0 / dispersion if family.name == "gamma_log" else None
        self.coef_covariance_ = cov
        self.n_iter_ = res.n_iter
        self.feature_names_in_ = list(feature_names)
        self.n_features_in_ = p
        self._train_design = design
        self._train_weights = w
        self._penalty = penalty
        return self

    @staticmethod
    def _gcv(design, y, w, res, penalty, family):
        xtwx = (design.T * res.weights) @ design
        a = xtwx + penalty
        try:
            edf = float(np.trace(np.linalg.solve(a, xtwx)))
        except np.linalg.LinAlgError:
            edf = float(np.trace(np.linalg.pinv(a) @ xtwx))
        n = y.size
        if n - edf < 1e-8:
            return np.inf, edf
        dev = family.deviance(y, res.mu, w)
        return n * dev / (n - edf) ** 2, edf

    def design_matrix(self, X) -> np.ndarray:
        """Assemble the model's full design matrix (intercept first) at X."""
        X = self._as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} covariate columns, got {X.shape[1]}"
            )
        n = X.shape[0] if X.shape[1] else len(X)
        width = 1 + sum(t.n_columns for t in self.terms_)
        design = np.empty((n, width))
        design[:, 0] = 1.0
        for j, t in enumerate(self.terms_):
            design[:, t.columns] = t.design_block(X[:, j])
        return design

    def penalty_matrix(self, lambdas=None) -> np.ndarray:
        """Total quadratic penalty at the fitted (or given) smoothing weights."""
        lams = self.lambdas_ if lambdas is None else np.asarray(lambdas, dtype=np.float64)
        width = 1 + sum(t.n_columns for t in self.terms_)
        s = np.zeros((width, width))
        for t, lam in zip(self.terms_, lams):
            if t.penalized:
                s[t.columns, t.columns] += lam * t.penalty_block()
        return s

    def predict(self, X) -> np.ndarray:
        """Predict on the response scale."""
        return self._family().linkinv(self.design_matrix(X) @ self.coefficients_)

    def predict_link(self, X, se: bool = False):
        """Linear predictor, optionally with its standard errors."""
        design = self.design_matrix(X)
        eta = design @ self.coefficients_
        if not se:
            return eta
        var = np.einsum("ij,jk,ik->i", design, self.coef_covariance_, design)
        return eta, np.sqrt(np.maximum(var, 0.0))

    def refit_coefficients(self, y_new, theta0=None) -> np.ndarray:
        """Re-solve the fitted model for a new response on the training design.

        Smoothing parameters stay fixed at their selected values; the
        training rows, weights and penalty are reused. Returns the new
        coefficient vector without mutating the model.
        """
        family = self._family()
        y_new = family.prepare(np.asarray(y_new, dtype=np.float64).ravel())
        res = _pirls(
            self._train_design,
            y_new,
            self._train_weights,
            self._penalty,
            family,
            max_iter=self.max_iter,
            tol=self.tol,
            theta0=self.coefficients_ if theta0 is None else theta0,
        )
        if not res.converged:
            raise FitError(f"{family.name} refit did not converge")
        return res.theta

    def to_dict(self) -> dict:
        """Self-describing state sufficient for bit-exact reload."""
        terms = []
        for t in self.terms_:
            entry = {
                "name": t.name,
                "kind": t.spec.kind,
                "dimension": t.spec.dimension,
                "knot_rule": t.spec.knot_rule,
                "lo": t.spec.lo,
                "hi": t.spec.hi,
                "fixed_lambda": t.spec.fixed_lambda,
                "lambda": t.lam,
                "dropped": t.dropped,
                "center": t.center,
            }
            if t.basis is not None:
                if t.spec.kind == "natural_cubic":
                    entry["knots"] = t.basis.knots.tolist()
                else:
                    entry["knots"] = t.basis.knots.tolist()
                entry["constraint"] = t.constraint.tolist()
            terms.append(entry)
        return {
            "model": "additive",
            "family": self.family,
            "terms": terms,
            "coefficients": self.coefficients_.tolist(),
            "coef_covariance": self.coef_covariance_.tolist(),
            "lambdas": self.lambdas_.tolist(),
            "dispersion": self.dispersion_,
            "shape": self.shape_,
            "edf": self.edf_,
            "gcv": self.gcv_score_,
            "deviance": self.deviance_,
            "feature_names": self.feature_names_in_,
            "sweeps": self.sweeps,
            "max_iter": self.max_iter,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, state: dict) -> "AdditiveModel":
        terms = []
        specs = []
        for entry in state["terms"]:
            spec = BasisSpec(
                kind=entry["kind"],
                dimension=entry["dimension"],
                knot_rule=entry["knot_rule"],
                lo=entry["lo"],
                hi=entry["hi"],
                fixed_lambda=entry["fixed_lambda"],
            )
            specs.append(spec)
            term = _Term(
                entry["name"],
                spec,
                center=entry["center"],
                lam=entry["lambda"],
                dropped=entry["dropped"],
            )
            if "knots" in entry:
                knots = np.asarray(entry["knots"], dtype=np.float64)
                if spec.kind == "natural_cubic":
                    term.basis = NaturalCubicBasis(knots)
                else:
                    interior = knots[4:-4]
                    term.basis = CubicBSplineBasis(knots[0], knots[-1], interior)
                term.constraint = np.asarray(entry["constraint"], dtype=np.float64)
            terms.append(term)
        model = cls(
            specs=specs,
            family=state["family"],
            sweeps=state["sweeps"],
            max_iter=state["max_iter"],
            tol=state["tol"],
        )
        start = 1
        for t in terms:
            t.columns = slice(start, start + t.n_columns)
            start += t.n_columns
        model.terms_ = terms
        model.coefficients_ = np.asarray(state["coefficients"], dtype=np.float64)
        model.intercept_ = float(model.coefficients_[0])
        model.coef_covariance_ = np.asarray(state["coef_covariance"], dtype=np.float64)
        model.lambdas_ = np.asarray(state["lambdas"], dtype=np.float64)
        model.dispersion_ = state["dispersion"]
        model.shape_ = state["shape"]
        model.edf_ = state["edf"]
        model.gcv_score_ = state["gcv"]
        model.deviance_ = state["deviance"]
        model.feature_names_in_ = list(state["feature_names"])
        model.n_features_in_ = len(model.feature_names_in_)
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AdditiveModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_gam(y, X, specs, family="gaussian_identity", weights=None, feature_names=None, **kwargs):
    """Functional wrapper over :class:`AdditiveModel`."""
    model = AdditiveModel(specs=specs, family=family, **kwargs)
    return model.fit(X, y, sample_weight=weights, feature_names=feature_names)
