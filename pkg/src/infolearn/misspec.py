"""Misspecified Bayesian linear-regression agents.

Two families: a wrong prior mean (exact pathwise excess-KL formula plus a
closed-form bound), and an agent oblivious to the last feature (excess
error converging to a quadrature-computable asymptote).

The missing-feature agent never learns theta_d; the unexplained
contribution theta_d * x_d enters its model as extra observation noise, so
each sample is weighted by 1/(sigma2 + x_d^2) and its predictive variance
carries the same inflation.  This is the model whose excess error attains
the (1/2) E[ln(1 + Z^2/sigma2)] limit.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dgp import LinRegSpec
from .info import GaussianDist, kl_gaussian


@dataclass(frozen=True)
class MisspecMeanConfig:
    base: LinRegSpec
    mu: tuple  # the agent's wrong prior mean

    def __post_init__(self):
        if len(self.mu) != self.base.d:
            raise ValueError("mu dimension mismatch")


@dataclass(frozen=True)
class MissingFeatureConfig:
    base: LinRegSpec  # the omitted coordinate is the last one

    def __post_init__(self):
        if self.base.d < 2:
            raise ValueError("requires d >= 2")


def excess_kl_pathwise_mean(x_path, x_next, mu, sigma2):
    """Excess KL of the wrong-prior-mean agent after observing x_path.

    Equals (1/2) mu' (S x x' S / (sigma2 + x' S x)) mu with
    S = (I + sum_i x_i x_i'/sigma2)^{-1}, the KL between the predictives of
    the correctly- and incorrectly-initialized posteriors at x_next.
    """
    mu = np.asarray(mu, dtype=float)
    x = np.asarray(x_next, dtype=float)
    d = len(mu)
    x_path = np.asarray(x_path, dtype=float).reshape(-1, d)
    s = np.linalg.inv(np.eye(d) + x_path.T @ x_path / sigma2)
    sx = s @ x
    return float((sx @ mu) ** 2 / (2.0 * (sigma2 + x @ sx)))


def excess_kl_bound_mean(d, t, mu_sq, sigma2):
    """Closed-form bound on the expected excess KL at step t; needs t >= 4d."""
    if t < 4 * d:
        raise ValueError("bound requires t >= 4d")
    tail = math.exp(-((0.5 * math.sqrt(t) - math.sqrt(d)) ** 2) / 2.0)
    return d * mu_sq * (2.0 / t**2 + tail / (2.0 * sigma2))


def _batched_sm_update(mean, cov, x, y, noise):
    """In-place rank-one posterior update batched over paths.

    noise is per-path observation variance (shape (P,) or scalar).
    """
    cx = np.einsum("pij,pj->pi", cov, x)
    s = noise + np.einsum("pi,pi->p", x, cx)
    cov -= cx[:, :, None] * cx[:, None, :] / s[:, None, None]
    mean += cx * ((y - np.einsum("pi,pi->p", mean, x)) / s)[:, None]


def mean_misspec_excess_mc(d, sigma2, mu, ts, n_paths, rng):
    """MC mean and se of the pathwise excess KL at each t in ts."""
    mu = np.asarray(mu, dtype=float)
    t_max = max(ts)
    cov = np.broadcast_to(np.eye(d), (n_paths, d, d)).copy()
    out = {}
    for t in range(t_max + 1):
        x = rng.standard_normal((n_paths, d))
        if t in ts:
            cx = np.einsum("pij,pj->pi", cov, x)
            s = sigma2 + np.einsum("pi,pi->p", x, cx)
            vals = (cx @ mu) ** 2 / (2.0 * s)
            out[t] = (vals.mean(), vals.std(ddof=1) / np.sqrt(n_paths))
        # absorb x into the posterior covariance (mean plays no role here)
        cx = np.einsum("pij,pj->pi", cov, x)
        s = sigma2 + np.einsum("pi,pi->p", x, cx)
        cov -= cx[:, :, None] * cx[:, None, :] / s[:, None, None]
    return out


class MissingFeatureAgent:
    """Conjugate regression on the first d-1 coordinates.

    The unmodeled theta_d * x_d term is treated as additional noise, so
    observation i carries variance sigma2 + x_{i,d}^2 (theta_d has unit
    prior variance) and the predictive at x does too.
    """

    def __init__(self, config):
        self.d = config.base.d
        self.sigma2 = config.base.sigma2
        self.posterior_mean = np.zeros(self.d - 1)
        self.posterior_cov = np.eye(self.d - 1)

    def _obs_noise(self, x):
        return self.sigma2 + x[-1] ** 2

    def update(self, x, y):
        x = np.asarray(x, dtype=float)
        xt = x[:-1]
        noise = self._obs_noise(x)
        cx = self.posterior_cov @ xt
        s = noise + xt @ cx
        self.posterior_cov -= np.outer(cx, cx) / s
        self.posterior_mean += cx * (y - self.posterior_mean @ xt) / s
        return self

    def predictive(self, x):
        x = np.asarray(x, dtype=float)
        xt = x[:-1]
        var = self._obs_noise(x) + xt @ self.posterior_cov @ xt
        return GaussianDist(float(self.posterior_mean @ xt), float(var))


def missing_feature_agent(config):
    return MissingFeatureAgent(config)


def missing_feature_asymptote(sigma2, n_nodes=201):
    """Large-t excess error limit (1/2) E[ln(1 + Z^2/sigma2)], Z ~ N(0,1).

    Gauss-Hermite quadrature; the integrand is smooth so 201 nodes are
    plenty.
    """
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    z = np.sqrt(2.0) * nodes
    g = 0.5 * np.log1p(z**2 / sigma2)
    return float((weights * g).sum() / np.sqrt(np.pi))


def missing_feature_excess_mc(d, sigma2, t, n_paths, rng):
    """MC of the missing-feature excess KL at step t, batched over paths.

    Returns (mean, se, decomposition_residual_mean, decomposition_residual_se)
    where the residual is KL(P*||P) - KL(P*||P_hat) - KL(P_hat||P), whose
    expectation is zero for the exact posterior P_hat.
    """
    theta = rng.standard_normal((n_paths, d))
    mean_f = np.zeros((n_paths, d))
    cov_f = np.broadcast_to(np.eye(d), (n_paths, d, d)).copy()
    dm = d - 1
    mean_m = np.zeros((n_paths, dm))
    cov_m = np.broadcast_to(np.eye(dm), (n_paths, dm, dm)).copy()
    sig = math.sqrt(sigma2)
    for _ in range(t):
        x = rng.standard_normal((n_paths, d))
        y = np.einsum("pi,pi->p", theta, x) + sig * rng.standard_normal(n_paths)
        _batched_sm_update(mean_f, cov_f, x, y, np.full(n_paths, sigma2))
        _batched_sm_update(mean_m, cov_m, x[:, :dm], y, sigma2 + x[:, -1] ** 2)
    x = rng.standard_normal((n_paths, d))
    m_star = np.einsum("pi,pi->p", theta, x)
    m_hat = np.einsum("pi,pi->p", mean_f, x)
    v_hat = sigma2 + np.einsum("pi,pij,pj->p", x, cov_f, x)
    m_mis = np.einsum("pi,pi->p", mean_m, x[:, :dm])
    v_mis = sigma2 + x[:, -1] ** 2 + np.einsum("pi,pij,pj->p", x[:, :dm], cov_m, x[:, :dm])

    def kl(m1, v1, m2, v2):
        r = v1 / v2
        return (m1 - m2) ** 2 / (2 * v2) + 0.5 * (r - 1 - np.log(r))

    excess = kl(m_hat, v_hat, m_mis, v_mis)
    resid = kl(m_star, sigma2, m_mis, v_mis) - kl(m_star, sigma2, m_hat, v_hat) - excess
    n = n_paths
    return (
        float(excess.mean()),
        float(excess.std(ddof=1) / np.sqrt(n)),
        float(resid.mean()),
        float(resid.std(ddof=1) / np.sqrt(n)),
    )


def write_excess_csv(fh, rows):
    """rows: iterables of (t, mc_mean, se, bound, asymptote); None allowed."""
    w = csv.writer(fh)
    w.writerow(["t", "mc_mean", "se", "bound", "asymptote"])
    for t, mc_mean, se, bound, asym in rows:
        w.writerow([t] + ["" if v is None else repr(float(v)) for v in (mc_mean, se, bound, asym)])
