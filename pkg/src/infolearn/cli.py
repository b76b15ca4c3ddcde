"""Command-line front end.

Subcommands: bounds, regret, misspec, proxy-check, teach, report.  Every
run writes a manifest JSON before any results; stochastic subcommands
require --seed.  A TOML config file can supply any flag's value; explicit
flags win.  Exit code is 0 iff nothing aborted.
"""

import argparse
import csv
import json
import math
import os
import sys
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import bayes, bounds, experiment, misspec
from .dgp import LinRegSpec, ScalarEnvSpec
from .experiment import Gamma
from .info import NATS_PER_BIT
from .rng import derive_rng


def _load_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SystemExit(f"config parse error in {path}: {exc}")


def _merge(args, config, parser):
    """Apply config-file values wherever the flag was left at its default."""
    for key, val in config.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) == parser.get_default(attr):
            setattr(args, attr, val)
    return args


def _require_seed(args):
    if args.seed is None:
        raise SystemExit("--seed is required (seeds are mandatory on stochastic runs)")
    return int(args.seed)


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _manifest(args, outdir, extra=None):
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if extra:
        doc.update(extra)
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        return experiment.write_manifest(fh, doc, getattr(args, "seed", None))


def _curve_for(args):
    family = args.family
    if family == "scalar":
        return bounds.scalar_rd_curve(args.sigma2)
    if family == "linreg":
        return bounds.linreg_rd_upper_curve(args.d, args.sigma2)
    if family == "single-layer-independent":
        return bounds.single_layer_rd_curve("independent", args.sigma2, d=args.d, N=args.N)
    if family == "single-layer-dirichlet":
        return bounds.single_layer_rd_curve(
            "dirichlet", args.sigma2, d=args.d, M=args.M, form=args.form
        )
    raise SystemExit(f"unknown family {family!r}")


def cmd_bounds(args):
    outdir = _outdir(args)
    _manifest(args, outdir)
    curve = _curve_for(args)
    lo = args.eps_min if args.eps_min is not None else curve.eps_max * 1e-4
    hi = args.eps_max if args.eps_max is not None else curve.eps_max * 0.999
    n = args.grid
    eps_grid = [lo * (hi / lo) ** (i / (n - 1)) for i in range(n)]
    unit = 1.0 if args.units == "nats" else NATS_PER_BIT
    path = os.path.join(outdir, "bounds.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "params", "epsilon", "value", "status"])
        params = json.dumps(curve.params, sort_keys=True)
        for eps in eps_grid:
            try:
                val = curve(eps) / unit
                w.writerow([curve.family, params, repr(float(eps)), repr(float(val)), "ok"])
            except bounds.VacuousBound:
                w.writerow([curve.family, params, repr(eps), "", "vacuous"])
        for t in args.regret_T or []:
            br = bounds.regret_bracket(curve, int(t))
            w.writerow([curve.family, params, f"regret_lower@T={t}", repr(float(br.lower) / unit), "ok"])
            w.writerow([curve.family, params, f"regret_upper@T={t}", repr(float(br.upper) / unit), "ok"])
        for eps in args.teps or []:
            try:
                br = bounds.sample_complexity_bracket(curve, float(eps))
                w.writerow([curve.family, params, f"Teps_lower@eps={eps}", repr(br.lower), "ok"])
                w.writerow([curve.family, params, f"Teps_upper@eps={eps}", repr(br.upper), "ok"])
            except bounds.VacuousBound:
                w.writerow([curve.family, params, f"Teps@eps={eps}", "", "vacuous"])
    print(f"wrote {path}")
    return 0


def cmd_regret(args):
    seed = _require_seed(args)
    outdir = _outdir(args)
    _manifest(args, outdir)
    if args.env == "scalar":
        spec = ScalarEnvSpec(sigma2=args.sigma2)
    else:
        spec = LinRegSpec(d=args.d, sigma2=args.sigma2)
    curve = bayes.simulate_regret(
        spec, args.T, args.trials, derive_rng(seed, "regret"), estimator=args.estimator
    )
    path = os.path.join(outdir, "regret.csv")
    with open(path, "w", newline="") as fh:
        curve.write_csv(fh)
    print(f"wrote {path} (cumulative R({args.T}) = {curve.total:.6g} nats)")
    return 0


def cmd_misspec(args):
    seed = _require_seed(args)
    outdir = _outdir(args)
    _manifest(args, outdir)
    ts = [int(t) for t in args.t]
    rng = derive_rng(seed, "misspec")
    rows = []
    if args.kind == "mean":
        mu = [args.mu_scale] * args.d
        stats = misspec.mean_misspec_excess_mc(args.d, args.sigma2, mu, set(ts), args.paths, rng)
        mu_sq = sum(m * m for m in mu)
        for t in ts:
            mean, se = stats[t]
            bound = (
                misspec.excess_kl_bound_mean(args.d, t, mu_sq, args.sigma2)
                if t >= 4 * args.d
                else None
            )
            rows.append((t, mean, se, bound, None))
    else:
        asym = misspec.missing_feature_asymptote(args.sigma2)
        for t in ts:
            mean, se, _, _ = misspec.missing_feature_excess_mc(
                args.d, args.sigma2, t, args.paths, rng
            )
            rows.append((t, mean, se, None, asym))
    path = os.path.join(outdir, "misspec.csv")
    with open(path, "w", newline="") as fh:
        misspec.write_excess_csv(fh, rows)
    print(f"wrote {path}")
    return 0


def cmd_proxy_check(args):
    seed = _require_seed(args)
    outdir = _outdir(args)
    _manifest(args, outdir)
    report = bounds.proxy_check(
        args.family,
        args.sigma2,
        args.eps,
        args.samples,
        derive_rng(seed, "proxy"),
        d=args.d,
    )
    path = os.path.join(outdir, "proxy_check.json")
    doc = {
        "family": report.family, "eps": report.eps, "delta2": report.delta2,
        "distortion": report.distortion, "se": report.se,
        "rate_cap": report.rate_cap, "satisfied": report.satisfied,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"wrote {path} (distortion {report.distortion:.5g} vs eps {report.eps})")
    return 0 if report.satisfied else 1


def cmd_teach(args):
    seed = _require_seed(args)
    outdir = _outdir(args)
    start = time.time()
    _manifest(args, outdir)
    gammas = []
    for d in args.d:
        if args.prior == "independent":
            for n in args.N:
                gammas.append(Gamma("independent", int(d), N=int(n), sigma=args.sigma))
        else:
            for m in args.M:
                gammas.append(Gamma("dirichlet", int(d), M=int(m), sigma=args.sigma))
    workers = args.workers or int(os.environ.get("INFOLEARN_WORKERS", "1"))
    table, records = experiment.sweep(
        gammas,
        [float(e) for e in args.targets],
        trials=args.trials,
        master_seed=seed,
        t_start=args.t_start,
        t_cap=args.t_cap,
        workers=workers,
        progress=lambda g, t, m: print(f"  {g.prior} d={g.d} N={g.N} M={g.M} T={t}: "
                                       f"mean error {m:.4g}", flush=True),
    )
    with open(os.path.join(outdir, "trials.csv"), "w", newline="") as fh:
        experiment.write_trials_csv(fh, records)
    with open(os.path.join(outdir, "table.csv"), "w", newline="") as fh:
        experiment.write_table_csv(fh, table)
    # rewrite the manifest with the wall time now that the run is complete
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        experiment.write_manifest(fh, doc, seed, wall_time_s=time.time() - start)
    n_aborted = sum(1 for r in records if r.status != "ok")
    print(f"wrote {outdir}/trials.csv and table.csv ({n_aborted} aborted trials)")
    return 0 if n_aborted == 0 else 1


def cmd_report(args):
    outdir = _outdir(args)
    _manifest(args, outdir)
    with open(os.path.join(args.run_dir, "table.csv")) as fh:
        table = experiment.read_table_csv(fh)
    with open(os.path.join(args.run_dir, "trials.csv")) as fh:
        records = experiment.read_trials_csv(fh)
    doc = {}
    for regressor in ("dN", "dM"):
        try:
            fit = experiment.fit_scaling(table, regressor)
            doc[f"scaling_{regressor}"] = {
                "slope": fit.slope,
                "constant": fit.constant,
                "reference_constant": fit.reference_constant,
                "n_points": fit.n_points,
            }
        except ValueError:
            pass
    qr = experiment.q_report(records)
    doc["q"] = {
        "per_T": {str(t): {"mean_Q": v[0], "Q_over_T": v[1]} for t, v in qr.per_t.items()},
        "loglog_slope": qr.slope,
        "reference_ratio": qr.reference_ratio,
    }
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="TOML file supplying defaults for any flag")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="infolearn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="rate-distortion / regret / T_eps curves")
    _add_common(p)
    p.add_argument("--family", required=True,
                   choices=["scalar", "linreg", "single-layer-independent",
                            "single-layer-dirichlet"])
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--form", default="corollary", choices=["theorem", "corollary"])
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--eps-min", type=float, default=None)
    p.add_argument("--eps-max", type=float, default=None)
    p.add_argument("--regret-T", type=int, nargs="*", default=None)
    p.add_argument("--teps", type=float, nargs="*", default=None)
    p.add_argument("--units", default="nats", choices=["nats", "bits"])
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("regret", help="Monte Carlo regret of the exact Bayes agent")
    _add_common(p)
    p.add_argument("--env", default="scalar", choices=["scalar", "linreg"])
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--estimator", default="analytic", choices=["analytic", "theta_mc"])
    p.set_defaults(func=cmd_regret)

    p = sub.add_parser("misspec", help="excess error of misspecified agents")
    _add_common(p)
    p.add_argument("--kind", default="mean", choices=["mean", "missing"])
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--mu-scale", type=float, default=1.0,
                   help="each coordinate of the wrong prior mean")
    p.add_argument("--t", nargs="+", default=["40", "100", "400"])
    p.add_argument("--paths", type=int, default=1000)
    p.set_defaults(func=cmd_misspec)

    p = sub.add_parser("proxy-check", help="Monte Carlo check of proxy constructions")
    _add_common(p)
    p.add_argument("--family", default="scalar", choices=["scalar", "linreg"])
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_proxy_check)

    p = sub.add_parser("teach", help="teacher-student sample-complexity sweep")
    _add_common(p)
    p.add_argument("--prior", required=True, choices=["independent", "dirichlet"])
    p.add_argument("--d", type=int, nargs="+", required=True)
    p.add_argument("--N", type=int, nargs="+", default=[1])
    p.add_argument("--M", type=int, nargs="+", default=[1])
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--targets", type=float, nargs="+", default=[1.0, 0.5])
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--t-start", type=int, default=2)
    p.add_argument("--t-cap", type=int, default=2**14)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("report", help="scaling fit and query report for a sweep")
    _add_common(p)
    p.add_argument("--run-dir", required=True, help="directory written by `teach`")
    p.set_defaults(func=cmd_report)
    parser.sub_map = {name: sp for name, sp in sub.choices.items()}
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _merge(args, _load_config(args.config), parser.sub_map[args.command])
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
