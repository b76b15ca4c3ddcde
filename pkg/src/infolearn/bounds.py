"""Closed-form bound evaluators and bracket machinery.

Rate-distortion functions H_eps for each environment family, the generic
conversions to regret and sample-complexity brackets, stability constants
of random ReLU layers, multilayer composition, and Monte Carlo checks of
the constructive additive-noise proxies.

Every bound is valid only on a stated parameter interval; outside it the
evaluators raise VacuousBound rather than returning a number.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .info import GaussianDist, kl_gaussian

_PHI = (1 + math.sqrt(5)) / 2


class VacuousBound(ValueError):
    """The requested bound is vacuous / out of its validity interval."""


# ---------------------------------------------------------------------------
# generic machinery


@dataclass(frozen=True)
class RdFunction:
    """A rate-distortion curve eps -> nats on a validity interval."""

    family: str
    params: dict
    eps_min: float
    eps_max: float
    _fn: callable

    def __call__(self, eps):
        if not (self.eps_min < eps < self.eps_max):
            raise VacuousBound(
                f"{self.family}: eps={eps} outside ({self.eps_min}, {self.eps_max})"
            )
        return self._fn(eps)


@dataclass(frozen=True)
class Bracket:
    lower: float
    upper: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"bracket inverted: {self.lower} > {self.upper}")


@dataclass(frozen=True)
class StabilityConstant:
    L: float  # exact squared-Lipschitz constant ||E[A'A]||
    bound: float = None  # the simple closed-form cap, when applicable
    layer: str = ""


@dataclass(frozen=True)
class AdditiveNoiseProxy:
    delta2: float
    eps: float


@dataclass(frozen=True)
class EntropyCaps:
    regret_cap: float
    t_cap: float
    vacuous: bool = False


def _golden_min(f, a, b, rel_tol=1e-6):
    """Golden-section minimum of f on [a, b]."""
    inv_phi = 1 / _PHI
    c = b - (b - a) * inv_phi
    d = a + (b - a) * inv_phi
    fc, fd = f(c), f(d)
    while (b - a) > rel_tol * max(abs(a), abs(b), 1e-300):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * inv_phi
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * inv_phi
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _grid_golden_min(f, lo, hi, n_grid=128):
    """Log-spaced grid scan followed by golden-section refinement."""
    xs = np.geomspace(lo, hi, n_grid)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmin(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n_grid - 1)]
    x_ref, v_ref = _golden_min(f, a, b)
    if v_ref < vals[i]:
        return x_ref, v_ref
    return float(xs[i]), float(vals[i])


def entropy_bounds(h_env, eps):
    """Caps from the environment entropy alone: (H, ceil(H/eps))."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if h_env < 0:
        raise ValueError("entropy must be nonnegative")
    if math.isinf(h_env):
        return EntropyCaps(math.inf, math.inf, vacuous=True)
    return EntropyCaps(h_env, math.ceil(h_env / eps), vacuous=False)


def _domain(h):
    lo = max(h.eps_min, h.eps_max * 1e-9)
    hi = h.eps_max * (1 - 1e-9)
    if not lo < hi:
        raise VacuousBound("empty validity interval")
    return lo, hi


def regret_bracket(h, big_t):
    """sup_eps min(H_eps, eps T) <= R(T) <= inf_eps (H_eps + eps T)."""
    if big_t < 1:
        raise ValueError("T must be >= 1")
    lo, hi = _domain(h)
    eps_lower, neg = _grid_golden_min(lambda e: -min(h(e), e * big_t), lo, hi)
    eps_upper, upper = _grid_golden_min(lambda e: h(e) + e * big_t, lo, hi)
    return Bracket(-neg, upper, meta={"eps_lower": eps_lower, "eps_upper": eps_upper, "T": big_t})


def sample_complexity_bracket(h, eps):
    """H_eps/eps <= T_eps <= min_delta ceil(H_{eps-delta}/delta)."""
    lo, hi = _domain(h)
    if not (lo <= eps <= hi):
        raise VacuousBound(f"eps={eps} outside H domain")
    lower = h(eps) / eps

    def upper_obj(delta):
        return h(eps - delta) / delta

    d_lo = eps * 1e-6
    d_hi = eps * (1 - 1e-9)
    # the eps-delta argument must stay inside H's domain
    d_lo = max(d_lo, eps - hi)
    deltas = np.geomspace(d_lo, d_hi, 128)
    deltas = np.append(deltas, eps / 2)
    ceil_vals = [math.ceil(upper_obj(d)) for d in deltas]
    i = int(np.argmin(ceil_vals))
    d_ref, _ = _golden_min(upper_obj, max(d_lo, deltas[i] * 0.5), min(d_hi, deltas[i] * 2.0))
    upper = min(min(ceil_vals), math.ceil(upper_obj(d_ref)))
    loose_cap = math.ceil(2 * h(eps / 2) / eps) if lo < eps / 2 < hi else None
    meta = {"loose_cap": loose_cap, "eps": eps}
    return Bracket(lower, upper, meta=meta)


# ---------------------------------------------------------------------------
# scalar estimation


def scalar_r1(sigma2):
    """First-step regret of scalar Gaussian estimation: (1/2)ln(1 + 1/sigma2)."""
    return 0.5 * math.log1p(1.0 / sigma2)


def scalar_rd(sigma2, eps, h_theta=None, r1=None):
    """Rate-distortion value for scalar estimation with unit-variance theta.

    Gaussian theta (default): exact (1/2)ln((e^{2R(1)}-1)/(e^{2 eps}-1))
    with R(1) = (1/2)ln(1 + 1/sigma2).  For a general theta the caller
    supplies its differential entropy h_theta (and optionally R(1); the
    Gaussian value, which dominates R(1) at unit variance, is the default),
    giving the upper bound with prefactor 2*pi*e/e^{2h}.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if r1 is None:
        r1 = scalar_r1(sigma2)
    if not (0 < eps < r1):
        raise VacuousBound(f"eps must lie in (0, {r1})")
    factor = 1.0 if h_theta is None else 2 * math.pi * math.e / math.exp(2 * h_theta)
    return 0.5 * math.log(factor * math.expm1(2 * r1) / math.expm1(2 * eps))


def scalar_rd_curve(sigma2, h_theta=None):
    r1 = scalar_r1(sigma2)
    return RdFunction(
        family="scalar",
        params={"sigma2": sigma2, "h_theta": h_theta},
        eps_min=0.0,
        eps_max=r1,
        _fn=lambda e: scalar_rd(sigma2, e, h_theta=h_theta),
    )


def scalar_proxy_delta2(sigma2, eps):
    """Noise variance of the additive proxy theta~ = theta + N(0, delta2)."""
    num = sigma2 * math.expm1(2 * eps)
    den = 1.0 - num
    if den <= 0:
        raise VacuousBound("eps too large for the scalar additive-noise proxy")
    return AdditiveNoiseProxy(delta2=num / den, eps=eps)


# ---------------------------------------------------------------------------
# linear regression


@dataclass(frozen=True)
class LinRegRd:
    lower: float = None  # absent when its validity condition fails
    upper: float = None


def linreg_rd(d, sigma2, eps):
    """Rate-distortion bracket for d-dimensional Gaussian linear regression.

    upper: (d/2) ln(d/(sigma2(e^{2 eps}-1))), valid while the log argument
    exceeds 1; lower: (d/2) ln(d/(2(4d+sigma2) eps)), needs d > 2 and
    eps <= 1/(2(4d+sigma2)).  A side outside its interval is None.
    """
    if d < 1 or sigma2 <= 0 or eps <= 0:
        raise ValueError("need d >= 1, sigma2 > 0, eps > 0")
    upper = None
    arg = d / (sigma2 * math.expm1(2 * eps))
    if arg > 1:
        upper = 0.5 * d * math.log(arg)
    lower = None
    if d > 2 and eps <= 1.0 / (2 * (4 * d + sigma2)):
        lower = 0.5 * d * math.log(d / (2 * (4 * d + sigma2) * eps))
    return LinRegRd(lower=lower, upper=upper)


def linreg_rd_upper_curve(d, sigma2):
    eps_max = 0.5 * math.log1p(d / sigma2)  # where the log argument hits 1
    return RdFunction(
        family="linreg",
        params={"d": d, "sigma2": sigma2},
        eps_min=0.0,
        eps_max=eps_max,
        _fn=lambda e: 0.5 * d * math.log(d / (sigma2 * math.expm1(2 * e))),
    )


def linreg_t_eps(d, sigma2, eps):
    """Sample-complexity bracket for linear regression."""
    if d <= 2:
        raise VacuousBound("requires d > 2")
    if not (0 < eps <= 1.0 / (2 * (4 * d + sigma2))):
        raise VacuousBound("requires eps <= 1/(2(4d + sigma2))")
    lower = (d / (2 * eps)) * math.log(d / (2 * (4 * d + sigma2) * eps))
    upper = (d / eps) * math.log(d / (sigma2 * eps))
    return Bracket(lower, upper, meta={"d": d, "sigma2": sigma2, "eps": eps})


def linreg_proxy_delta2(d, sigma2, eps):
    num = sigma2 * math.expm1(2 * eps)
    den = d - num
    if den <= 0:
        raise VacuousBound("eps too large for the linreg additive-noise proxy")
    return AdditiveNoiseProxy(delta2=num / den, eps=eps)


# ---------------------------------------------------------------------------
# single layers and networks


def single_layer_rd(prior, sigma2, eps, d=None, N=None, M=None, form="theorem"):
    """Single-layer rate-distortion bound.

    independent: (dN/2) ln(N/(2 sigma2 eps)).
    dirichlet, form "theorem" (general d-output layer): d^2 M ln^2(3d/(sigma2 eps));
    form "corollary" (teacher network, scalar output): d M ln^2(3d/(sigma2 eps)).
    """
    if sigma2 <= 0 or eps <= 0:
        raise ValueError("sigma2 and eps must be positive")
    if prior == "independent":
        arg = N / (2 * sigma2 * eps)
        if arg <= 1:
            raise VacuousBound("vacuous: N/(2 sigma2 eps) <= 1")
        return 0.5 * d * N * math.log(arg)
    if prior == "dirichlet":
        arg = 3 * d / (sigma2 * eps)
        if arg <= 1:
            raise VacuousBound("vacuous: 3d/(sigma2 eps) <= 1")
        scale = d * d * M if form == "theorem" else d * M
        return scale * math.log(arg) ** 2
    raise ValueError(f"unknown prior {prior!r}")


def single_layer_rd_curve(prior, sigma2, d=None, N=None, M=None, form="theorem"):
    if prior == "independent":
        eps_max = N / (2 * sigma2)
        params = {"d": d, "N": N, "sigma2": sigma2}
    else:
        eps_max = 3 * d / sigma2
        params = {"d": d, "M": M, "sigma2": sigma2, "form": form}
    return RdFunction(
        family=f"single_layer_{prior}",
        params=params,
        eps_min=0.0,
        eps_max=eps_max,
        _fn=lambda e: single_layer_rd(prior, sigma2, e, d=d, N=N, M=M, form=form),
    )


def multilayer_compose(h_layers, eps):
    """Composed bound sum_k H_k(eps/K); any layer out of domain is fatal."""
    k = len(h_layers)
    if k < 1:
        raise ValueError("need at least one layer")
    return sum(h(eps / k) for h in h_layers)


@dataclass(frozen=True)
class NetworkBounds:
    h: float
    t_eps: float  # an upper bound on the sample complexity


def network_bounds(prior, sigma2, eps, d=None, K=None, N=None, M=None):
    """Whole-network rate-distortion and sample-complexity bounds.

    independent: H = ((K N^2 + d N)/2) ln(K/(2 sigma2 eps)),
                 T_eps <= ((K N^2 + d N)/eps) ln(K/(sigma2 eps)).
    dirichlet:   H = d^2 M K ln^2(3K/(sigma2 eps)),
                 T_eps <= (2 d^2 M K/eps) ln(6K/(sigma2 eps)).
    """
    if sigma2 <= 0 or eps <= 0:
        raise ValueError("sigma2 and eps must be positive")
    if prior == "independent":
        arg_h = K / (2 * sigma2 * eps)
        arg_t = K / (sigma2 * eps)
        if arg_h <= 1 or arg_t <= 1:
            raise VacuousBound("vacuous independent network bound")
        coef = K * N * N + d * N
        return NetworkBounds(0.5 * coef * math.log(arg_h), (coef / eps) * math.log(arg_t))
    if prior == "dirichlet":
        arg_h = 3 * K / (sigma2 * eps)
        arg_t = 6 * K / (sigma2 * eps)
        if arg_h <= 1 or arg_t <= 1:
            raise VacuousBound("vacuous dirichlet network bound")
        coef = d * d * M * K
        return NetworkBounds(coef * math.log(arg_h) ** 2, (2 * coef / eps) * math.log(arg_t))
    raise ValueError(f"unknown prior {prior!r}")


# ---------------------------------------------------------------------------
# stability


def stability(layer_spec):
    """Squared-Lipschitz constant L = ||E[A'A]|| of a random layer.

    layer_spec is ("independent", d_in, d_out), ("dirichlet", N, d_out, M)
    for the sign-flipped scaled-Dirichlet matrix over N inputs, or an
    explicit E[A'A] matrix.
    """
    if isinstance(layer_spec, np.ndarray):
        return StabilityConstant(
            L=float(np.linalg.norm(layer_spec, 2)), layer="explicit-moment"
        )
    kind = layer_spec[0]
    if kind == "independent":
        _, d_in, d_out = layer_spec
        l_val = d_out / d_in  # exact: E[A'A] = (d_out/d_in) I at variance 1/d_in
        return StabilityConstant(L=l_val, bound=l_val, layer=f"independent {d_in}->{d_out}")
    if kind == "dirichlet":
        _, n, d_out, m = layer_spec
        l_val = d_out * m * (m + n) / ((m + 1) * n * n)
        bound = d_out / n if m * m <= n else None
        return StabilityConstant(L=l_val, bound=bound, layer=f"dirichlet {n}->{d_out} M={m}")
    raise ValueError(f"unknown layer spec {layer_spec!r}")


def stability_mc(d_in, d_out, n_draws, rng):
    """MC estimate of E||relu(Ax) - relu(Ay)||^2 / ||x - y||^2 for the
    independent prior (A entries N(0, 1/d_in)), at a random input pair."""
    x = rng.standard_normal(d_in)
    y = rng.standard_normal(d_in)
    a = rng.standard_normal((n_draws, d_out, d_in)) / np.sqrt(d_in)
    fx = np.maximum(a @ x, 0.0)
    fy = np.maximum(a @ y, 0.0)
    ratios = ((fx - fy) ** 2).sum(axis=1) / ((x - y) ** 2).sum()
    return float(ratios.mean()), float(ratios.std(ddof=1) / np.sqrt(n_draws))


def multilayer_distortion(l_products, layer_mse, sigma2):
    """Output distortion from a single perturbed layer: (1/2)ln(1 + prod(L) mse/sigma2)."""
    if layer_mse < 0 or sigma2 <= 0:
        raise ValueError("need layer_mse >= 0 and sigma2 > 0")
    prod = float(np.prod(l_products)) if np.ndim(l_products) else float(l_products)
    if prod < 0:
        raise ValueError("stability products must be nonnegative")
    return 0.5 * math.log1p(prod * layer_mse / sigma2)


# ---------------------------------------------------------------------------
# proxy Monte Carlo checks


@dataclass(frozen=True)
class ProxyReport:
    family: str
    eps: float
    delta2: float
    distortion: float
    se: float
    rate_cap: float
    satisfied: bool


def proxy_check(family, sigma2, eps, mc_samples, rng, d=None):
    """Verify the additive-noise proxy construction by Monte Carlo.

    Samples (theta, theta~ = theta + V) and estimates the distortion
    E[KL(P* || P~)], which the construction guarantees is <= eps; the
    analytic rate cap (1/2)ln(1 + 1/delta2) per dimension is reported.
    """
    n = int(mc_samples)
    if family == "scalar":
        delta2 = scalar_proxy_delta2(sigma2, eps).delta2
        dim = 1
        theta = rng.standard_normal((n, 1))
        x = np.ones((n, 1))
    elif family == "linreg":
        delta2 = linreg_proxy_delta2(d, sigma2, eps).delta2
        dim = d
        theta = rng.standard_normal((n, d))
        x = rng.standard_normal((n, d))
    else:
        raise ValueError(f"unknown family {family!r}")
    theta_tilde = theta + math.sqrt(delta2) * rng.standard_normal((n, dim))
    shrink = 1.0 / (1.0 + delta2)  # posterior of theta given theta~
    m_proxy = np.einsum("ni,ni->n", theta_tilde, x) * shrink
    v_proxy = sigma2 + delta2 * shrink * (x**2).sum(axis=1)
    m_star = np.einsum("ni,ni->n", theta, x)
    ratio = sigma2 / v_proxy
    kls = (m_star - m_proxy) ** 2 / (2 * v_proxy) + 0.5 * (ratio - 1 - np.log(ratio))
    mean = float(kls.mean())
    se = float(kls.std(ddof=1) / np.sqrt(n))
    rate_cap = 0.5 * dim * math.log1p(1.0 / delta2)
    return ProxyReport(
        family=family,
        eps=eps,
        delta2=delta2,
        distortion=mean,
        se=se,
        rate_cap=rate_cap,
        satisfied=mean <= eps + 3 * se,
    )
