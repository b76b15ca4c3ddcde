"""Exact Bayes-optimal learner for scalar estimation and linear regression.

The conjugate Gaussian posterior is maintained in covariance form with
rank-one Sherman-Morrison updates; a full Cholesky refresh from the
accumulated precision matrix runs every 256 updates to bound drift.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dgp import LinRegSpec, ScalarEnvSpec
from .info import GaussianDist, kl_gaussian

_REFRESH_EVERY = 256


class GaussianPosterior:
    """Posterior N(mean, cov) over theta in a Gaussian linear model."""

    def __init__(self, d, prior_mean=None, prior_cov=None):
        self.d = d
        self.mean = np.zeros(d) if prior_mean is None else np.array(prior_mean, dtype=float)
        self.cov = np.eye(d) if prior_cov is None else np.array(prior_cov, dtype=float)
        # accumulated natural parameters, used for periodic refreshes
        self._precision = np.linalg.inv(self.cov)
        self._rhs = self._precision @ self.mean
        self._n_updates = 0

    def copy(self):
        out = GaussianPosterior.__new__(GaussianPosterior)
        out.d = self.d
        out.mean = self.mean.copy()
        out.cov = self.cov.copy()
        out._precision = self._precision.copy()
        out._rhs = self._rhs.copy()
        out._n_updates = self._n_updates
        return out

    def update(self, x, y, sigma2):
        """Observe (x, y) with y = theta.x + N(0, sigma2) noise, in place."""
        x = np.asarray(x, dtype=float)
        if not (np.all(np.isfinite(x)) and math.isfinite(y)):
            raise ValueError("non-finite observation")
        cx = self.cov @ x
        s = sigma2 + x @ cx
        self.cov -= np.outer(cx, cx) / s
        self.mean += cx * (y - self.mean @ x) / s
        self._precision += np.outer(x, x) / sigma2
        self._rhs += x * (y / sigma2)
        self._n_updates += 1
        if self._n_updates % _REFRESH_EVERY == 0:
            self._refresh()
        return self

    def _refresh(self):
        chol = np.linalg.cholesky(self._precision)
        inv_l = np.linalg.solve(chol, np.eye(self.d))
        self.cov = inv_l.T @ inv_l
        self.mean = self.cov @ self._rhs


def posterior_update(post, x, y, sigma2):
    """Functional form of the conjugate update; returns a new posterior."""
    return post.copy().update(x, y, sigma2)


def predictive(post, x, sigma2):
    """Posterior-predictive N(mean.x, sigma2 + x.cov.x) at input x."""
    x = np.asarray(x, dtype=float)
    return GaussianDist(float(post.mean @ x), float(sigma2 + x @ post.cov @ x))


def expected_step_kl(post, x, sigma2):
    """E over theta | history of KL(target || predictive): (1/2)ln(1 + x.cov.x/sigma2)."""
    x = np.asarray(x, dtype=float)
    return 0.5 * math.log1p(float(x @ post.cov @ x) / sigma2)


def exact_cumulative_info(x_path, sigma2):
    """(1/2) ln det(I + X'X/sigma2) for the stacked inputs X."""
    x_path = np.atleast_2d(np.asarray(x_path, dtype=float))
    if x_path.size == 0:
        return 0.0
    d = x_path.shape[1]
    sign, logdet = np.linalg.slogdet(np.eye(d) + x_path.T @ x_path / sigma2)
    assert sign > 0
    return 0.5 * logdet


@dataclass
class RegretCurve:
    """Per-step expected errors (nats) with standard errors and running sum."""

    step_mean: np.ndarray
    step_se: np.ndarray

    @property
    def cumulative(self):
        return np.cumsum(self.step_mean)

    @property
    def total(self):
        return float(self.step_mean.sum())

    @property
    def total_se(self):
        # steps within a trial are correlated; conservative sum of ses
        return float(self.step_se.sum())

    def write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(["t", "mean_step_kl", "se", "cumulative"])
        cum = self.cumulative
        for t in range(len(self.step_mean)):
            w.writerow(
                [t + 1, repr(float(self.step_mean[t])), repr(float(self.step_se[t])), repr(float(cum[t]))]
            )


def _simulate_scalar_mc(sigma2, T, n_trials, rng):
    """theta-sampling MC estimator of the scalar per-step expected KL."""
    theta = rng.standard_normal(n_trials)
    y = theta[:, None] + np.sqrt(sigma2) * rng.standard_normal((n_trials, T))
    t = np.arange(T)
    post_var = 1.0 / (1.0 + t / sigma2)  # deterministic for x = 1
    cum_y = np.hstack([np.zeros((n_trials, 1)), np.cumsum(y, axis=1)[:, :-1]])
    post_mean = (cum_y / sigma2) * post_var
    pred_var = sigma2 + post_var
    ratio = sigma2 / pred_var
    kls = (theta[:, None] - post_mean) ** 2 / (2 * pred_var) + 0.5 * (
        ratio - 1.0 - np.log(ratio)
    )
    return kls.mean(axis=0), kls.std(axis=0, ddof=1) / np.sqrt(n_trials)


def simulate_regret(spec, T, n_trials, rng, estimator="analytic"):
    """Monte Carlo regret curve for a scalar or linear-regression environment.

    estimator "analytic" averages the conditional closed-form per-step
    expected KL over sampled data paths (low variance); "theta_mc"
    additionally samples theta and evaluates the Gaussian KL directly.
    """
    if T == 0:
        return RegretCurve(np.zeros(0), np.zeros(0))
    if isinstance(spec, ScalarEnvSpec):
        if estimator == "theta_mc":
            mean, se = _simulate_scalar_mc(spec.sigma2, T, n_trials, rng)
            return RegretCurve(mean, se)
        t = np.arange(T)
        step = 0.5 * np.log1p((1.0 / (1.0 + t / spec.sigma2)) / spec.sigma2)
        return RegretCurve(step, np.zeros(T))
    if not isinstance(spec, LinRegSpec):
        raise TypeError("simulate_regret supports scalar and linreg specs")
    d, sigma2 = spec.d, spec.sigma2
    vals = np.empty((n_trials, T))
    for i in range(n_trials):
        post = GaussianPosterior(d)
        xs = rng.standard_normal((T, d))
        if estimator == "theta_mc":
            theta = rng.standard_normal(d)
            ys = xs @ theta + np.sqrt(sigma2) * rng.standard_normal(T)
        for t in range(T):
            x = xs[t]
            if estimator == "theta_mc":
                p_star = GaussianDist(float(theta @ x), sigma2)
                vals[i, t] = kl_gaussian(p_star, predictive(post, x, sigma2))
                post.update(x, ys[t], sigma2)
            else:
                vals[i, t] = expected_step_kl(post, x, sigma2)
                # analytic value needs only the covariance; y is irrelevant
                post.update(x, 0.0, sigma2)
    return RegretCurve(vals.mean(axis=0), vals.std(axis=0, ddof=1) / np.sqrt(n_trials))


class BayesianLinearModel:
    """Estimator-style wrapper around the conjugate Gaussian posterior."""

    def __init__(self, d, sigma2, prior_mean=None):
        self.d = d
        self.sigma2 = sigma2
        self.prior_mean = prior_mean
        self.posterior_ = GaussianPosterior(d, prior_mean=prior_mean)

    def get_params(self):
        return {"d": self.d, "sigma2": self.sigma2, "prior_mean": self.prior_mean}

    def partial_fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if X.shape[0] != y.shape[0] or X.shape[1] != self.d:
            raise ValueError("shape mismatch")
        for xi, yi in zip(X, y):
            self.posterior_.update(xi, yi, self.sigma2)
        return self

    def fit(self, X, y):
        self.posterior_ = GaussianPosterior(self.d, prior_mean=self.prior_mean)
        return self.partial_fit(X, y)

    def predict(self, X, return_std=False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mean = X @ self.posterior_.mean
        if not return_std:
            return mean
        var = self.sigma2 + np.einsum("ij,jk,ik->i", X, self.posterior_.cov, X)
        return mean, np.sqrt(var)
