"""Scalar information-theoretic primitives.

All quantities are in nats.  Conversion to bits happens only at output
formatting time (see cli).
"""

import math
from dataclasses import dataclass

_MIN_VARIANCE = 1e-300

NATS_PER_BIT = math.log(2.0)


@dataclass(frozen=True)
class GaussianDist:
    """A univariate Gaussian N(mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be positive and finite, got {self.variance}")
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")


def kl_gaussian(p, q):
    """KL divergence D(p || q) between univariate Gaussians, in nats.

    (mu_p - mu_q)^2 / (2 sig_q^2) + (sig_p^2/sig_q^2 - 1 - ln(sig_p^2/sig_q^2)) / 2
    """
    vp, vq = p.variance, q.variance
    if vp < _MIN_VARIANCE or vq < _MIN_VARIANCE:
        raise ValueError("variances must be >= 1e-300")
    ratio = vp / vq
    return (p.mean - q.mean) ** 2 / (2.0 * vq) + 0.5 * (ratio - 1.0 - math.log(ratio))


def kl_from_mse_upper(mse, sigma2):
    """Upper bound on expected KL given mean squared error: (1/2) ln(1 + mse/sigma^2)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if mse < 0:
        raise ValueError("mse must be nonnegative")
    return 0.5 * math.log1p(mse / sigma2)


def kl_from_mse_lower(mse, delta2):
    """Lower-bound conversion under a subgaussian predictive: mse / delta^2."""
    if delta2 <= 0:
        raise ValueError("delta2 must be positive")
    if mse < 0:
        raise ValueError("mse must be nonnegative")
    return mse / delta2


def max_diff_entropy(dim, trace_cov):
    """Maximum differential entropy of a d-vector with a fixed covariance trace.

    Achieved by N(0, (trace_cov/d) I): (d/2) ln(2 pi e trace_cov / d).
    """
    if dim < 1 or int(dim) != dim:
        raise ValueError("dim must be a positive integer")
    if trace_cov <= 0:
        raise ValueError("trace_cov must be positive")
    d = int(dim)
    return 0.5 * d * math.log(2.0 * math.pi * math.e * trace_cov / d)
