"""From-scratch trainer for single-hidden-layer ReLU regression networks.

Adam on L2 loss, a learning-rate range test for the initial step size, a
reduce-on-plateau schedule, relative-improvement early stopping, and a
golden-section search over the hidden width.  Every consumed training
sample is counted in a QueryCounter, including range-test steps.

Conventions the optimizer depends on: the ReLU subgradient at exactly 0
is 0, and all shuffles/inits are driven by caller-provided generators so
runs are bit-reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dgp import TeacherNetwork, relu

_PHI = (1 + math.sqrt(5)) / 2


class TrainingAborted(RuntimeError):
    """Raised when the loss goes non-finite; the trial is discarded."""


@dataclass
class TrainConfig:
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    plateau_factor: float = 10.0
    plateau_patience: int = 12
    lr_floor: float = 1e-7
    early_stop_window: int = 24
    early_stop_rel: float = 0.01
    max_epochs: int = 1500
    val_fraction: float = 0.2
    cv_folds: int = 8
    cv_budget: int = 16  # fits per width = folds x restarts, held constant
    # known label-noise variance; a monitored loss below it means the fit
    # is interpolating noise, so checkpointing treats such losses as worse
    # than the floor by the same margin (0 disables the floor)
    noise_floor: float = 0.0


class QueryCounter:
    """Exact count of training-data-point accesses."""

    def __init__(self):
        self.q = 0

    def add(self, n):
        self.q += int(n)


class MlpModel:
    """Fully-connected ReLU net; widths = (d_in, hidden..., 1)."""

    def __init__(self, widths, weights, biases):
        self.widths = tuple(int(w) for w in widths)
        self.weights = weights
        self.biases = biases

    @property
    def n_params(self):
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy_params(self):
        return [p.copy() for p in self.params()]

    def set_params(self, flat):
        for i in range(len(self.weights)):
            self.weights[i] = flat[2 * i]
            self.biases[i] = flat[2 * i + 1]

    def forward(self, x):
        u = np.atleast_2d(np.asarray(x, dtype=float))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            u = relu(u @ w.T + b)
        u = u @ self.weights[-1].T + self.biases[-1]
        return u[:, 0]

    def to_teacher(self):
        """Serialize the trained net in the teacher JSON schema."""
        weights = []
        for w, b in zip(self.weights, self.biases):
            weights.append(np.hstack([w, b[:, None]]))
        return TeacherNetwork(prior="student", weights=weights, include_bias_dim=True)


def mlp_init(widths, rng):
    """Fan-in-scaled uniform init (variance 1/fan_in); biases zero."""
    if any(int(w) < 1 for w in widths):
        raise ValueError("all widths must be >= 1")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        a = math.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(widths, weights, biases)


def mse_loss(model, x, y):
    return float(np.mean((model.forward(x) - y) ** 2))


def grad(model, x, y):
    """Analytic gradient of the batch mean squared error.

    Returns [dW1, db1, dW2, db2, ...] matching model.params().
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    acts = [x]
    pre = []
    u = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = u @ w.T + b
        pre.append(z)
        u = relu(z)
        acts.append(u)
    out = (u @ model.weights[-1].T + model.biases[-1])[:, 0]
    n = x.shape[0]
    delta = (2.0 / n) * (out - y)[:, None]
    grads = [None] * (2 * len(model.weights))
    grads[-2] = delta.T @ acts[-1]
    grads[-1] = delta.sum(axis=0)
    d_u = delta @ model.weights[-1]
    for i in range(len(model.weights) - 2, -1, -1):
        d_z = d_u * (pre[i] > 0)  # subgradient 0 at the kink
        grads[2 * i] = d_z.T @ acts[i]
        grads[2 * i + 1] = d_z.sum(axis=0)
        if i > 0:
            d_u = d_z @ model.weights[i]
    return grads


class AdamState:
    def __init__(self, model, config):
        self.m = [np.zeros_like(p) for p in model.params()]
        self.v = [np.zeros_like(p) for p in model.params()]
        self.t = 0
        self.config = config


def adam_step(model, state, grads, lr):
    c = state.config
    state.t += 1
    bc1 = 1 - c.beta1**state.t
    bc2 = 1 - c.beta2**state.t
    params = model.params()
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = c.beta1 * state.m[i] + (1 - c.beta1) * g
        state.v[i] = c.beta2 * state.v[i] + (1 - c.beta2) * g * g
        p -= lr * (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + c.adam_eps)


class _BatchStream:
    """Cycles through a dataset in seeded shuffled order."""

    def __init__(self, x, y, batch_size, rng):
        self.x, self.y = x, y
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(len(y))
        self._pos = 0

    def next(self):
        if self._pos >= len(self._order):
            self._order = self.rng.permutation(len(self._order))
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch_size]
        self._pos += len(idx)
        return self.x[idx], self.y[idx]


def lr_find(model, x, y, config, rng, counter, max_steps=150, lr_cap=1.0):
    """Learning-rate range test on a scratch copy of the model.

    Ramps the rate by x1.3 from 1e-8, tracking a bias-corrected EMA of the
    batch loss, and stops once the smoothed loss exceeds 4x its running
    best, the raw loss goes non-finite, or the rate reaches lr_cap.
    Returns the median of the steep / minimum / valley heuristics computed
    on the pre-divergence segment, falling back to 1e-3 if the ramp dies
    immediately.
    """
    scratch = MlpModel(model.widths, [w.copy() for w in model.weights],
                       [b.copy() for b in model.biases])
    state = AdamState(scratch, config)
    stream = _BatchStream(x, y, config.batch_size, rng)
    lr = 1e-8
    ema = 0.0
    lrs, smoothed = [], []
    best = math.inf
    for step in range(max_steps):
        bx, by = stream.next()
        loss = mse_loss(scratch, bx, by)
        if not math.isfinite(loss):
            break
        ema = 0.98 * ema + 0.02 * loss
        s = ema / (1 - 0.98 ** (step + 1))
        lrs.append(lr)
        smoothed.append(s)
        best = min(best, s)
        if (s > 4 * best and step > 10) or lr >= lr_cap:
            break
        g = grad(scratch, bx, by)
        adam_step(scratch, state, g, lr)
        counter.add(len(by))
        lr *= 1.3
    if len(lrs) < 5:
        return 1e-3  # immediate divergence; documented fallback
    # heuristics look only at the stable segment: drop the trailing points
    # where the smoothed loss had already left its running minimum behind
    run_min = np.minimum.accumulate(smoothed)
    stable = np.nonzero(np.array(smoothed) <= 2 * run_min)[0]
    cut = int(stable[-1]) + 1 if len(stable) else len(lrs)
    lrs = np.array(lrs[:cut])
    log_s = np.log(np.maximum(smoothed[:cut], 1e-300))
    slopes = np.diff(log_s)
    lr_steep = lrs[int(np.argmin(slopes))]
    i_min = int(np.argmin(log_s))
    lr_min = lrs[i_min] / 20.0
    # valley: longest contiguous run with smoothed loss within 5% of range of the min
    thresh = log_s.min() + 0.05 * (log_s.max() - log_s.min())
    in_valley = log_s <= thresh
    best_run, run_start, cur_start = (0, 0), 0, None
    for i, flag in enumerate(np.append(in_valley, False)):
        if flag and cur_start is None:
            cur_start = i
        elif not flag and cur_start is not None:
            if i - cur_start > best_run[0]:
                best_run = (i - cur_start, cur_start)
            cur_start = None
    length, start = best_run
    lr_valley = math.sqrt(lrs[start] * lrs[start + max(length - 1, 0)])
    # clip: Adam rates beyond ~0.1 destabilize small nets even when the
    # short ramp happened not to diverge
    return float(min(np.median([lr_steep, lr_min, lr_valley]), 0.1))


@dataclass
class TrainResult:
    model: MlpModel
    best_val_loss: float
    epochs: int
    lr0: float
    status: str = "ok"


def train(model, x, y, config, rng, counter, x_val=None, y_val=None):
    """Fit the model on (x, y), monitoring held-out loss.

    The monitor set is (x_val, y_val) when given, otherwise a seeded 80/20
    split of (x, y).  Adam at the range-test rate, /10 on a 12-epoch
    plateau (floored at 1e-7), stopping when the best monitored loss
    improves by less than 1% over 24 epochs, hard-capped at 1500 epochs.

    The monitored loss pools the training and held-out points: with only
    a couple of held-out points, checkpointing on them alone keeps
    whichever passing weights happened to nail those points, which can
    be arbitrarily bad everywhere else.  Returns the weights with the
    best monitored loss; best_val_loss is the held-out loss there.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x_val is not None:
        xt, yt = x, y
        xv = np.atleast_2d(np.asarray(x_val, dtype=float))
        yv = np.asarray(y_val, dtype=float)
    else:
        n = len(y)
        order = rng.permutation(n)
        n_val = max(1, int(round(config.val_fraction * n)))
        if n_val >= n:  # degenerate tiny datasets: validate on the training point
            tr_idx = val_idx = order
        else:
            val_idx, tr_idx = order[:n_val], order[n_val:]
        xt, yt = x[tr_idx], y[tr_idx]
        xv, yv = x[val_idx], y[val_idx]
    xm, ym = np.vstack([xt, xv]), np.concatenate([yt, yv])

    lr0 = lr_find(model, xt, yt, config, np.random.default_rng(rng.integers(2**63)), counter)
    lr = lr0
    state = AdamState(model, config)
    nf = config.noise_floor

    def scored(loss):
        # mirror losses below the known noise floor: interpolating the
        # noise is as bad as undershooting the floor by the same amount
        return loss if loss >= nf else 2 * nf - loss

    best_val = math.inf
    best_params = model.copy_params()
    best_history = []
    wait = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(yt))
        for lo in range(0, len(yt), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            g = grad(model, xt[idx], yt[idx])
            adam_step(model, state, g, lr)
            counter.add(len(idx))
        val = mse_loss(model, xm, ym)
        if not math.isfinite(val):
            raise TrainingAborted(f"non-finite monitored loss at epoch {epoch}")
        val = scored(val)
        if val > 100 * max(best_val, 1e-12) and best_val < math.inf:
            # the rate is destabilizing the weights: back off and restore
            model.set_params([p.copy() for p in best_params])
            state = AdamState(model, config)
            lr = max(lr / config.plateau_factor, config.lr_floor)
            wait = 0
            best_history.append(best_val)
            continue
        if val < best_val * (1 - 1e-4):
            best_val = val
            best_params = model.copy_params()
            wait = 0
        else:
            wait += 1
            if wait >= config.plateau_patience:
                lr = max(lr / config.plateau_factor, config.lr_floor)
                wait = 0
        best_history.append(best_val)
        w = config.early_stop_window
        if epoch > w and best_val > (1 - config.early_stop_rel) * best_history[-1 - w]:
            break
    model.set_params(best_params)
    return TrainResult(
        model=model, best_val_loss=mse_loss(model, xv, yv), epochs=epoch, lr0=lr0
    )


def width_range(t, d, n):
    """Searchable hidden-width interval for a dataset of size t."""
    if min(t, d, n) < 1:
        raise ValueError("arguments must be positive")
    return 2, 32 + 8 * min(t, math.sqrt(d * n) + max(d, n))


def golden_width_search(range_log2, evaluator, tol=0.25):
    """Golden-section search on log2(width) with integer-width caching.

    evaluator(width) returns a validation loss.  Returns
    (best_width, evaluations, n_steps) where evaluations maps width ->
    loss and n_steps counts interval reductions (at most
    ceil(ln(range/tol)/ln(phi))).
    """
    a, b = range_log2
    if not a < b:
        raise ValueError("empty width range")
    cache = {}

    def f(log2_w):
        w = max(2, int(round(2**log2_w)))
        if w not in cache:
            cache[w] = evaluator(w)
        return cache[w]

    inv_phi = 1 / _PHI
    c = b - (b - a) * inv_phi
    d = a + (b - a) * inv_phi
    fc, fd = f(c), f(d)
    steps = 0
    while (b - a) > tol:
        steps += 1
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * inv_phi
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * inv_phi
            fd = f(d)
    best_width = min(cache, key=cache.get)
    return best_width, cache, steps
