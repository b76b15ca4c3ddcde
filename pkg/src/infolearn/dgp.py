"""Data-generating processes.

Environments: scalar Gaussian mean estimation, Gaussian linear regression,
and deep ReLU teacher networks under two weight priors:

- independent: weights independent, zero-mean Gaussian, variance 1/fan_in.
- dirichlet: inner rows are sign-flipped sqrt(M)-scaled Dirichlet(M/N,...,M/N)
  vectors, giving effective sparsity M independent of the width N.

Also contains the multinomial row quantizer used as an executable proxy
construction for dirichlet-style rows.
"""

import json
from dataclasses import dataclass, field

import numpy as np


def relu(z):
    return np.maximum(z, 0.0)


# ---------------------------------------------------------------------------
# environment specs


@dataclass(frozen=True)
class ScalarEnvSpec:
    """Y = theta + W, theta ~ N(0,1), W ~ N(0, sigma2)."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class LinRegSpec:
    """Y = theta.x + W with theta ~ N(prior_mean, I_d), X ~ N(0, I_d)."""

    d: int
    sigma2: float
    prior_mean: tuple = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.prior_mean is not None and len(self.prior_mean) != self.d:
            raise ValueError("prior_mean dimension mismatch")


@dataclass(frozen=True)
class IndepNetSpec:
    """ReLU network with independent Gaussian weights, variance 1/fan_in.

    K hidden layers of width N on a d-dimensional input, scalar linear
    output.  With include_bias_dim a constant-1 coordinate is appended to
    the input, so the first-layer fan-in is d+1.
    """

    d: int
    N: int
    K: int = 1
    sigma2: float = 0.01
    include_bias_dim: bool = False

    def __post_init__(self):
        if min(self.d, self.N, self.K) < 1:
            raise ValueError("d, N, K must be >= 1")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class DirichletNetSpec:
    """Layers u -> B.relu(A.u) with Dirichlet-structured outer rows.

    A has N rows over the layer input (Gaussian rows of variance 1/d_in,
    or uniform unit-sphere rows when unit_sphere_rows is set).  Each row of
    B is sqrt(M) times a Dirichlet(M/N,...,M/N) draw with independent sign
    flips.  Hidden layers map back to dimension d; the last layer is 1-row.
    """

    d: int
    M: int
    N: int
    K: int = 1
    sigma2: float = 0.01
    unit_sphere_rows: bool = False

    def __post_init__(self):
        if min(self.d, self.M, self.N, self.K) < 1:
            raise ValueError("d, M, N, K must be >= 1")
        if self.M > self.N:
            raise ValueError("requires M <= N")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class DataPair:
    x: np.ndarray
    y: float
    f: float = None  # noiseless target, recorded optionally


# ---------------------------------------------------------------------------
# teacher networks


@dataclass
class TeacherNetwork:
    """Sampled network weights plus the forward rule for its prior family.

    prior "independent" (and "student"): weights = [A_1, ..., A_K, B];
    forward applies ReLU after every A and a final linear read-out B.
    prior "dirichlet": weights = [A_1, B_1, ..., A_K, B_K]; each layer
    computes B.relu(A.u) with no outer ReLU.
    """

    prior: str
    weights: list = field(default_factory=list)
    include_bias_dim: bool = False
    seed: int = None

    FORMAT_VERSION = 1

    @property
    def input_dim(self):
        d = self.weights[0].shape[1]
        return d - 1 if self.include_bias_dim else d

    @property
    def shape(self):
        return [list(w.shape) for w in self.weights]

    def forward(self, x, return_trace=False):
        """Evaluate the network; x is (d,) or a batch (n, d).

        With return_trace, also returns the list of layer outputs
        U_0 ... U_K (U_0 is the, possibly bias-extended, input).
        """
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        u = np.atleast_2d(x)
        if u.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {u.shape[1]}")
        if self.include_bias_dim:
            u = np.hstack([u, np.ones((u.shape[0], 1))])
        trace = [u]
        if self.prior == "dirichlet":
            for a, b in zip(self.weights[::2], self.weights[1::2]):
                u = relu(u @ a.T) @ b.T
                trace.append(u)
        else:
            for a in self.weights[:-1]:
                u = relu(u @ a.T)
                trace.append(u)
            u = u @ self.weights[-1].T
            trace.append(u)
        out = u[:, 0] if u.shape[1] == 1 else u
        if squeeze:
            out = out[0] if np.ndim(out) == 1 else out[0, :]
            trace = [t[0] for t in trace]
        return (out, trace) if return_trace else out

    def __call__(self, x):
        return self.forward(x)

    def to_json(self):
        doc = {
            "format_version": self.FORMAT_VERSION,
            "prior": self.prior,
            "include_bias_dim": self.include_bias_dim,
            "seed": self.seed,
            "shapes": self.shape,
            "weights": [w.reshape(-1).tolist() for w in self.weights],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc["format_version"] != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {doc['format_version']}")
        weights = [
            np.array(flat, dtype=float).reshape(shape)
            for flat, shape in zip(doc["weights"], doc["shapes"])
        ]
        return cls(
            prior=doc["prior"],
            weights=weights,
            include_bias_dim=doc["include_bias_dim"],
            seed=doc["seed"],
        )


def teacher_forward(net, x, return_trace=False):
    return net.forward(x, return_trace=return_trace)


# ---------------------------------------------------------------------------
# sampling


def dirichlet_rows(n_rows, n_cols, alpha, rng):
    """Rows of Dirichlet(alpha, ..., alpha) over n_cols coordinates.

    For alpha < 1 naive Gamma variates underflow, so Gamma(alpha) draws are
    built from the small-shape boost G(alpha) = G(alpha+1) * U^(1/alpha)
    with the normalization done in log space.
    """
    if alpha >= 1.0:
        g = rng.gamma(alpha, size=(n_rows, n_cols))
        return g / g.sum(axis=1, keepdims=True)
    log_g = np.log(rng.gamma(alpha + 1.0, size=(n_rows, n_cols)))
    log_g += np.log(rng.uniform(size=(n_rows, n_cols))) / alpha
    log_g -= log_g.max(axis=1, keepdims=True)
    w = np.exp(log_g)
    return w / w.sum(axis=1, keepdims=True)


def signed_dirichlet_rows(n_rows, n_cols, alpha, scale, rng):
    """scale * sign-flipped Dirichlet rows; each row's abs-sum equals scale."""
    w = dirichlet_rows(n_rows, n_cols, alpha, rng)
    signs = rng.integers(0, 2, size=(n_rows, n_cols)) * 2.0 - 1.0
    return scale * signs * w


def unit_sphere_rows(n_rows, n_cols, rng):
    g = rng.standard_normal((n_rows, n_cols))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_env(spec, rng):
    """Draw an environment instance from its prior."""
    if isinstance(spec, ScalarEnvSpec):
        return float(rng.standard_normal())
    if isinstance(spec, LinRegSpec):
        theta = rng.standard_normal(spec.d)
        if spec.prior_mean is not None:
            theta = theta + np.asarray(spec.prior_mean, dtype=float)
        return theta
    if isinstance(spec, IndepNetSpec):
        fan0 = spec.d + 1 if spec.include_bias_dim else spec.d
        weights = [rng.standard_normal((spec.N, fan0)) / np.sqrt(fan0)]
        for _ in range(spec.K - 1):
            weights.append(rng.standard_normal((spec.N, spec.N)) / np.sqrt(spec.N))
        weights.append(rng.standard_normal((1, spec.N)) / np.sqrt(spec.N))
        return TeacherNetwork(
            prior="independent", weights=weights, include_bias_dim=spec.include_bias_dim
        )
    if isinstance(spec, DirichletNetSpec):
        alpha = spec.M / spec.N
        weights = []
        for k in range(spec.K):
            if spec.unit_sphere_rows:
                a = unit_sphere_rows(spec.N, spec.d, rng)
            else:
                a = rng.standard_normal((spec.N, spec.d)) / np.sqrt(spec.d)
            out_dim = 1 if k == spec.K - 1 else spec.d
            b = signed_dirichlet_rows(out_dim, spec.N, alpha, np.sqrt(spec.M), rng)
            weights.extend([a, b])
        return TeacherNetwork(prior="dirichlet", weights=weights)
    raise TypeError(f"unknown environment spec {type(spec).__name__}")


def _eval_env(env, x):
    if isinstance(env, TeacherNetwork):
        return env.forward(x)
    theta = np.asarray(env, dtype=float)
    if theta.ndim == 0:
        return float(theta) * np.ones(np.shape(x)[0]) if np.ndim(x) else float(theta)
    return x @ theta


def sample_batch(env, sigma2, n, rng):
    """n i.i.d. pairs; returns (X, y, f) with f the noiseless targets."""
    if isinstance(env, (int, float, np.floating)) or (
        isinstance(env, np.ndarray) and env.ndim == 0
    ):
        x = np.ones((n, 1))
        f = float(env) * np.ones(n)
    else:
        d = env.input_dim if isinstance(env, TeacherNetwork) else len(env)
        x = rng.standard_normal((n, d))
        f = _eval_env(env, x)
    y = f + np.sqrt(sigma2) * rng.standard_normal(n)
    return x, y, f


def sample_pair(env, sigma2, rng):
    x, y, f = sample_batch(env, sigma2, 1, rng)
    return DataPair(x=x[0], y=float(y[0]), f=float(f[0]))


# ---------------------------------------------------------------------------
# multinomial row quantizer


def multinomial_quantize_rows(a, r, rng, c=None):
    """Quantize scaled-simplex rows by multinomial resampling.

    Each row of `a` must equal sqrt(c) * sign ∘ (simplex vector).  The
    quantized row is (sqrt(c)/r) * sign(row) ∘ Multinomial(r, |row|/sqrt(c)).
    `c` defaults to the squared abs-sum of the first row.  Note the
    concentration convention here is the quantizer's own (c over the row);
    it is deliberately not tied to the M/N convention of DirichletNetSpec.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if r < 1 or int(r) != r:
        raise ValueError("r must be a positive integer")
    abs_sums = np.abs(a).sum(axis=1)
    if c is None:
        c = abs_sums[0] ** 2
    sqrt_c = np.sqrt(c)
    if np.any(np.abs(abs_sums - sqrt_c) > 1e-9):
        raise ValueError("rows must lie on the sqrt(c)-scaled simplex (abs-sum sqrt(c))")
    out = np.empty_like(a)
    for i in range(a.shape[0]):
        p = np.abs(a[i]) / sqrt_c
        p = p / p.sum()
        counts = rng.multinomial(int(r), p)
        out[i] = (sqrt_c / r) * np.sign(a[i]) * counts
    return out


def multinomial_quantize_bound(m, n, r, c, ex_sq=None):
    """Stated bound on E||AX - A~X||^2: (sqrt(c) M / (r N)) E[X'X].

    ex_sq is E[X'X] (defaults to N, the isotropic standard-normal case).
    The stated prefactor is tight only at c = 1; for general c use
    multinomial_quantize_bound_conservative.
    """
    if ex_sq is None:
        ex_sq = n
    return np.sqrt(c) * m * ex_sq / (r * n)


def multinomial_quantize_bound_conservative(m, n, r, c, ex_sq=None):
    """Bound (c M / (r N)) E[X'X], valid for every c > 0.

    Follows from E[A~'A~ - A'A | A] = (sqrt(c)/r)(diag(|A_i|) - A_i A_i'/sqrt(c))
    summed over rows, with E[diag(|A_i|)] = (sqrt(c)/N) I.
    """
    if ex_sq is None:
        ex_sq = n
    return c * m * ex_sq / (r * n)
