"""Teacher-student sample-complexity experiments.

One trial: sample a teacher network, generate T noisy pairs, fit a
single-hidden-layer ReLU student (width chosen by golden-section search),
and score E[(student(X) - teacher(X))^2]/(2 sigma^2) on a fresh noiseless
test set.  A sweep doubles T per parameter cell gamma until every error
target is hit, yielding factor-2-resolved sample complexities T_eps, a
scaling-law fit of eps*T_eps against d*N (or d*M), and a query-count
report.

All randomness derives from hash(master_seed, purpose, indices), so sweep
output is a pure function of (configuration, master seed).
"""

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dgp import DirichletNetSpec, IndepNetSpec, sample_batch, sample_env
from .nn import (
    QueryCounter,
    TrainConfig,
    TrainingAborted,
    golden_width_search,
    mlp_init,
    train,
    width_range,
)
from .rng import derive_rng, derive_seed

ARTIFACT_VERSION = "0.1.0"

# constants from the reference large-scale runs, used for comparison only
REFERENCE_SCALING = {"dN": 1.79, "dM": 3.92}
REFERENCE_Q_PER_T = 1940.0


@dataclass(frozen=True)
class Gamma:
    """Teacher hyperparameters for one experiment cell."""

    prior: str  # "independent" | "dirichlet"
    d: int
    N: int = None
    M: int = None
    sigma: float = 0.1

    def __post_init__(self):
        if self.prior not in ("independent", "dirichlet"):
            raise ValueError(f"unknown prior {self.prior!r}")
        if self.prior == "dirichlet":
            if self.M is None:
                raise ValueError("dirichlet cells need M")
            if self.N is None:
                object.__setattr__(self, "N", 4 * max(self.d, self.M))
        elif self.N is None:
            raise ValueError("independent cells need N")

    @property
    def sigma2(self):
        return self.sigma**2

    @property
    def regressor(self):
        """The quantity eps*T_eps is expected to scale with."""
        return self.d * (self.M if self.prior == "dirichlet" else self.N)

    def key(self):
        return (self.prior, self.d, self.N, self.M, self.sigma)

    def env_spec(self):
        if self.prior == "independent":
            return IndepNetSpec(
                d=self.d, N=self.N, K=1, sigma2=self.sigma2, include_bias_dim=True
            )
        return DirichletNetSpec(
            d=self.d, M=self.M, N=self.N, K=1, sigma2=self.sigma2, unit_sphere_rows=True
        )


@dataclass
class TrialRecord:
    gamma: Gamma
    T: int
    trial: int
    seed: int
    error: float  # test error in units of 2 sigma^2; NaN when aborted
    q: int
    width: int
    status: str = "ok"

    def csv_row(self):
        g = self.gamma
        return [
            g.prior,
            g.d,
            g.N if g.N is not None else "",
            g.M if g.M is not None else "",
            repr(g.sigma),
            self.T,
            self.trial,
            self.seed,
            "" if math.isnan(self.error) else repr(self.error),
            self.q,
            self.width,
            self.status,
        ]


TRIAL_CSV_HEADER = [
    "prior", "d", "N", "M", "sigma", "T", "trial", "seed", "error", "Q", "width", "status",
]
TABLE_CSV_HEADER = ["prior", "d", "N", "M", "sigma", "eps_target", "T_eps", "resolved"]


def run_trial(gamma, t, seed, test_size=10_000, config=None):
    """Execute one Algorithm-1 trial; fully determined by (gamma, t, seed)."""
    if t < 1:
        raise ValueError("T must be >= 1")
    config = config or TrainConfig()
    config = replace(config, noise_floor=gamma.sigma2)
    env = sample_env(gamma.env_spec(), derive_rng(seed, "teacher"))
    x, y, _ = sample_batch(env, gamma.sigma2, t, derive_rng(seed, "data"))
    counter = QueryCounter()
    x = np.atleast_2d(x)
    # width selection by k-fold cross-validation: a plain 80/20 split leaves
    # so few held-out points at small T that the search picks wild overfit
    # nets; the trial's predictor is the median of the per-fold models
    k_eff = min(config.cv_folds, t)
    # small datasets get extra restarts: individual fits there are both
    # cheap and unreliable, and the extra queries at small t only flatten
    # the Q-vs-T growth curve
    budget = config.cv_budget * max(1, min(4, 64 // t))
    restarts = max(1, budget // k_eff)
    fold_of = derive_rng(seed, "folds").permutation(t) % k_eff
    models = {}

    def evaluate(width):
        scores, members = [], []
        for k in range(k_eff):
            tr, va = fold_of != k, fold_of == k
            if not tr.any():  # t == 1: train and validate on the point
                tr = va
            best, best_model = math.inf, None
            cand = []
            for r in range(restarts):
                model = mlp_init(
                    (gamma.d, width, 1), derive_rng(seed, "init", width, k, r)
                )
                train(
                    model, x[tr], y[tr], config,
                    derive_rng(seed, "train", width, k, r), counter,
                    x_val=x[va], y_val=y[va],
                )
                # restarts are compared on all of the fold's data (one or
                # two held-out points cannot tell a solid fit from a lucky
                # one), with losses below the noise floor mirrored: a fit
                # that interpolates the noise generalizes badly
                full = float(np.mean((model.forward(x) - y) ** 2))
                if full < gamma.sigma2:
                    full = 2 * gamma.sigma2 - full
                cand.append((full, model))
                if full < best:
                    best, best_model = full, model
            scores.append(float(np.mean((best_model.forward(x[va]) - y[va]) ** 2)))
            # every restart close to the fold's best is a plausible fit;
            # pooling them all bags the ensemble at no extra cost
            for full, model in cand:
                if full <= 1.5 * best:
                    members.append(model)
        models[width] = members
        return float(np.mean(scores))

    lo, hi = width_range(t, gamma.d, gamma.N)
    try:
        best_width, cv_scores, _ = golden_width_search(
            (math.log2(lo), math.log2(hi)), evaluate
        )
    except TrainingAborted:
        return TrialRecord(
            gamma=gamma, T=t, trial=-1, seed=seed,
            error=math.nan, q=counter.q, width=0, status="aborted",
        )
    x_test = derive_rng(seed, "test").standard_normal((test_size, gamma.d))
    f_true = env.forward(x_test)
    # final fits at the chosen width on all t samples (the fold models only
    # ever saw (k-1)/k of them); for tiny datasets each final fit instead
    # sees a bootstrap resample, which diversifies the ensemble where
    # every net interpolates anyway
    final = []
    boot_rng = derive_rng(seed, "boot")
    for r in range(restarts):
        if t <= 16:
            idx = np.sort(boot_rng.integers(0, t, size=t))
            oob = np.setdiff1d(np.arange(t), idx)
            xa, ya = x[idx], y[idx]
            val = (x[oob], y[oob]) if oob.size else (None, None)
        else:
            xa, ya, val = x, y, (None, None)
        model = mlp_init((gamma.d, best_width, 1), derive_rng(seed, "final", r))
        try:
            train(model, xa, ya, config, derive_rng(seed, "final-train", r),
                  counter, x_val=val[0], y_val=val[1])
        except TrainingAborted:
            continue
        final.append(model)
    # pool fold models from every width whose cross-validation score is
    # close to the winner's: near-optimal widths are equally plausible
    # fits and their spread is honest model uncertainty
    cutoff = 1.5 * cv_scores[best_width] + 1e-12
    members = final + [
        m for w, s in cv_scores.items() if s <= cutoff for m in models[w]
    ]
    preds = np.stack([m.forward(x_test) for m in members])
    f_hat = np.median(preds, axis=0)
    # the fold models share most of their data, so at tiny T they can all
    # agree on a wild extrapolation; cap predictions at one label-range
    # beyond the observed labels
    margin = float(y.max() - y.min()) + 2.0 * gamma.sigma
    f_hat = np.clip(f_hat, float(y.min()) - margin, float(y.max()) + margin)
    error = float(np.mean((f_hat - f_true) ** 2) / (2 * gamma.sigma2))
    return TrialRecord(
        gamma=gamma, T=t, trial=-1, seed=seed,
        error=error, q=counter.q, width=best_width, status="ok",
    )


@dataclass(frozen=True)
class TableEntry:
    gamma: Gamma
    eps_target: float
    t_eps: int  # smallest tested T with mean error <= target; -1 if unresolved
    resolved: bool
    t_prev: int = None  # the bracketing T below (doubling schedule)

    def csv_row(self):
        g = self.gamma
        return [
            g.prior,
            g.d,
            g.N if g.N is not None else "",
            g.M if g.M is not None else "",
            repr(g.sigma),
            repr(self.eps_target),
            self.t_eps if self.resolved else "",
            int(self.resolved),
        ]


@dataclass
class SampleComplexityTable:
    entries: list = field(default_factory=list)

    def lookup(self, gamma, eps_target):
        for e in self.entries:
            if e.gamma.key() == gamma.key() and e.eps_target == eps_target:
                return e
        return None


def _trial_seed(master_seed, gamma, t, trial):
    return derive_seed(master_seed, "trial", *gamma.key(), t, trial)


def _run_cell(gamma, t, trials, master_seed, config, workers=1):
    seeds = [_trial_seed(master_seed, gamma, t, i) for i in range(trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_trial, gamma, t, s, 10_000, config) for s in seeds
            ]
            records = [f.result() for f in futures]
    else:
        records = [run_trial(gamma, t, s, config=config) for s in seeds]
    for i, r in enumerate(records):
        r.trial = i
    return records


def sweep(
    gammas,
    targets,
    trials=8,
    master_seed=0,
    t_start=2,
    t_cap=2**14,
    config=None,
    workers=1,
    progress=None,
):
    """Double T per cell until every error target is hit (or the cap).

    Returns (SampleComplexityTable, records).  Mean error per (gamma, T)
    averages completed trials only; T_eps is the smallest tested T whose
    mean error is <= the target, factor-2 resolved by the schedule.
    """
    targets = sorted(targets, reverse=True)
    config = config or TrainConfig()
    table = SampleComplexityTable()
    all_records = []
    for gamma in gammas:
        means = {}
        t = t_start
        while True:
            records = _run_cell(gamma, t, trials, master_seed, config, workers)
            all_records.extend(records)
            ok = [r.error for r in records if r.status == "ok"]
            means[t] = float(np.mean(ok)) if ok else math.nan
            if progress:
                progress(gamma, t, means[t])
            hit_all = all(
                any(m <= eps for m in means.values()) for eps in targets
            )
            if hit_all or t * 2 > t_cap:
                break
            t *= 2
        for eps in targets:
            hits = sorted(tt for tt, m in means.items() if not math.isnan(m) and m <= eps)
            if hits:
                t_eps = hits[0]
                table.entries.append(
                    TableEntry(gamma, eps, t_eps, True, t_prev=t_eps // 2)
                )
            else:
                table.entries.append(TableEntry(gamma, eps, -1, False))
    return table, all_records


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    constant: float  # exp(intercept): eps*T_eps ~ constant * regressor^slope
    residuals: tuple
    regressor: str
    reference_constant: float
    n_points: int


def fit_scaling(table, regressor):
    """Least squares of log(eps * T_eps) on log(dN) or log(dM)."""
    if regressor not in ("dN", "dM"):
        raise ValueError("regressor must be 'dN' or 'dM'")
    xs, ys = [], []
    for e in table.entries:
        if not e.resolved:
            continue
        wanted = "dM" if e.gamma.prior == "dirichlet" else "dN"
        if wanted != regressor:
            continue
        xs.append(math.log(e.gamma.regressor))
        ys.append(math.log(e.eps_target * e.t_eps))
    if len(xs) < 4:
        raise ValueError(f"need >= 4 resolved cells, got {len(xs)}")
    a = np.vstack([xs, np.ones(len(xs))]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, np.array(ys), rcond=None)
    resid = np.array(ys) - a @ np.array([slope, intercept])
    return ScalingFit(
        slope=float(slope),
        intercept=float(intercept),
        constant=float(math.exp(intercept)),
        residuals=tuple(float(r) for r in resid),
        regressor=regressor,
        reference_constant=REFERENCE_SCALING[regressor],
        n_points=len(xs),
    )


@dataclass(frozen=True)
class QReport:
    per_t: dict  # T -> (mean Q, mean Q / T)
    slope: float  # log-log slope of Q on T
    reference_ratio: float


def q_report(records):
    """Query-count summary: per-T means and the log-log slope of Q vs T."""
    done = [r for r in records if r.status == "ok"]
    if not done:
        raise ValueError("no completed records")
    per_t = {}
    for t in sorted({r.T for r in done}):
        qs = [r.q for r in done if r.T == t]
        per_t[t] = (float(np.mean(qs)), float(np.mean(qs) / t))
    slope = math.nan
    if len(per_t) >= 2:
        xs = np.log([t for t in per_t])
        ys = np.log([per_t[t][0] for t in per_t])
        a = np.vstack([xs, np.ones(len(xs))]).T
        (slope, _), *_ = np.linalg.lstsq(a, ys, rcond=None)
        slope = float(slope)
    return QReport(per_t=per_t, slope=slope, reference_ratio=REFERENCE_Q_PER_T)


# ---------------------------------------------------------------------------
# output files


def write_trials_csv(fh, records):
    w = csv.writer(fh)
    w.writerow(TRIAL_CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())


def write_table_csv(fh, table):
    w = csv.writer(fh)
    w.writerow(TABLE_CSV_HEADER)
    for e in table.entries:
        w.writerow(e.csv_row())


def _gamma_from_row(row):
    return Gamma(
        prior=row["prior"],
        d=int(row["d"]),
        N=int(row["N"]) if row["N"] else None,
        M=int(row["M"]) if row["M"] else None,
        sigma=float(row["sigma"]),
    )


def read_trials_csv(fh):
    records = []
    for row in csv.DictReader(fh):
        records.append(
            TrialRecord(
                gamma=_gamma_from_row(row),
                T=int(row["T"]),
                trial=int(row["trial"]),
                seed=int(row["seed"]),
                error=float(row["error"]) if row["error"] else math.nan,
                q=int(row["Q"]),
                width=int(row["width"]),
                status=row["status"],
            )
        )
    return records


def read_table_csv(fh):
    table = SampleComplexityTable()
    for row in csv.DictReader(fh):
        resolved = bool(int(row["resolved"]))
        t_eps = int(row["T_eps"]) if resolved else -1
        table.entries.append(
            TableEntry(
                gamma=_gamma_from_row(row),
                eps_target=float(row["eps_target"]),
                t_eps=t_eps,
                resolved=resolved,
                t_prev=t_eps // 2 if resolved else None,
            )
        )
    return table


def config_hash(config_doc):
    return hashlib.sha256(
        json.dumps(config_doc, sort_keys=True, default=str).encode()
    ).hexdigest()


def write_manifest(fh, config_doc, master_seed, wall_time_s=None):
    doc = {
        "artifact_version": ARTIFACT_VERSION,
        "config": config_doc,
        "config_hash": config_hash(config_doc),
        "master_seed": master_seed,
        "wall_time_s": wall_time_s,
        "created_unix": int(time.time()),
    }
    json.dump(doc, fh, indent=2, sort_keys=True)
    fh.write("\n")
    return doc
