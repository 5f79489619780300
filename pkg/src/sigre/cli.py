"""Command-line interface: ``sigre simulate|train|infer|evaluate|benchmark|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("sigre")


def _observation(args, model):
    from .series import TimeSeries

    if getattr(args, "observation", None):
        return TimeSeries.from_csv(args.observation)
    return model.observe(0)


def cmd_simulate(args) -> int:
    from .simulators import get_model, simulate_dataset

    model = get_model(args.model)
    thetas = None
    if args.theta is not None:
        if len(args.theta) != model.prior.dim:
            raise SystemExit(f"--theta needs {model.prior.dim} values for {args.model}")
        thetas = np.tile(np.asarray(args.theta, dtype=np.float64), (args.n, 1))
    data = simulate_dataset(model, args.n, args.seed, thetas)
    data.save(args.out)
    log.info("wrote %d simulations to %s", len(data), args.out)
    return 0


def cmd_train(args) -> int:
    from .ratio import SeriesGram, TuneSpace, fit_ratio_estimator, make_series_kernel, tune
    from .series import Dataset
    from .simulators import get_model

    data = Dataset.load(args.data)
    kind = args.model or data.meta.get("model")
    if kind is None:
        raise SystemExit("--model is required when the dataset does not record it")
    model = get_model(kind)
    x_obs = _observation(args, model)
    opts = {"dyadic_order": args.dyadic_order} if args.method == "signature" else {}
    gram = SeriesGram(make_series_kernel(args.method, x_obs, data, kind, **opts), data.series)
    q = args.q if args.q is not None else int(round(len(data) * (args.K + 1)))
    rng = np.random.default_rng(args.seed)
    best = tune(TuneSpace(folds=args.folds, trials=args.trials, search=args.search), data, gram, rng, K=args.K, q=q)
    est = fit_ratio_estimator(data, gram, lengthscales=best.lengthscales, omega=best.omega,
                              epsilon=best.epsilon, K=args.K, q=q, rng=rng, prior=model.prior)
    est.info.update(model=kind, method=args.method, cv_loss=best.cv_loss)
    Path(args.out).write_text(json.dumps(est.to_json()))
    log.info("trained %s estimator (cv log-loss %.4f) -> %s", args.method, best.cv_loss, args.out)
    return 0


def cmd_infer(args) -> int:
    from .ratio import RatioEstimator
    from .samplers import MHConfig, SIRConfig, metropolis_hastings, sir_resample, write_samples
    from .simulators import get_model

    est = RatioEstimator.from_json(json.loads(Path(args.estimator).read_text()))
    model = get_model(est.info.get("model", args.model))
    prior = est.prior or model.prior
    x_obs = _observation(args, model)
    lr = est.log_ratio_fn(x_obs)
    rng = np.random.default_rng(args.seed)
    sampler = args.sampler or ("mh" if model.loglik is not None else "sir")
    if sampler == "mh":
        def target(theta):
            lp = prior.logpdf(theta)
            return lp + lr(theta) if np.isfinite(lp) else -np.inf

        cfg = MHConfig(tuple(model.theta_star), args.trial_steps, args.main_steps, args.thin,
                       tuple(prior.proposal_scale()))
        res = metropolis_hastings(target, cfg, rng)
        samples, side = res.samples, res.sidecar()
    else:
        cfg = SIRConfig(args.prior_draws, args.resample_draws)
        draws = prior.sample(rng, cfg.prior_draws)
        samples, side = sir_resample(draws, lr(draws), cfg, rng), {}
    config = {k: v for k, v in vars(args).items() if k != "func"}
    side.update(sampler=sampler, seed=args.seed, config=config)
    write_samples(args.out, samples, side)
    log.info("wrote %d posterior samples to %s", len(samples), args.out)
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import mean_distance, wasserstein
    from .samplers import read_samples

    a, b = read_samples(args.a), read_samples(args.b)
    rec = {"w1": wasserstein(a, b, p=args.p, rng=args.seed), "mean_dist": mean_distance(a, b),
           "n_a": int(a.shape[0]), "n_b": int(b.shape[0])}
    text = json.dumps(rec, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_benchmark(args) -> int:
    from .harness import ExperimentConfig, emit_report, run_experiment

    cfg = ExperimentConfig.from_toml(args.config, out=args.out,
                                     seeds=None if args.seed is None else [args.seed])
    records = run_experiment(cfg, log=log.info)
    emit_report(records, Path(cfg.out) / "report")
    failed = sum(not r.ok for r in records)
    log.info("%d cells, %d failed; report in %s", len(records), failed, Path(cfg.out) / "report")
    return 1 if failed else 0


def cmd_report(args) -> int:
    from .harness import emit_report, load_records

    out = args.out or str(Path(args.results) / "report")
    for p in emit_report(load_records(args.results), out):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sigre", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw prior-predictive (or fixed-theta) simulations")
    s.add_argument("--model", choices=("ou", "ma2", "gse"), required=True)
    s.add_argument("--theta", type=float, nargs="+")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="tune and fit a ratio estimator on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--model", choices=("ou", "ma2", "gse"))
    t.add_argument("--method", choices=("signature", "k2", "bespoke-rbf"), default="signature")
    t.add_argument("--observation", help="CSV series fixing the kernel scales (default: seed-0 observation)")
    t.add_argument("--K", type=float, default=1.0)
    t.add_argument("--q", type=int)
    t.add_argument("--trials", type=int, default=30)
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--search", choices=("tpe", "random"), default="tpe")
    t.add_argument("--dyadic-order", type=int, default=0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="sample the posterior of a trained estimator")
    i.add_argument("--estimator", required=True)
    i.add_argument("--model", choices=("ou", "ma2", "gse"))
    i.add_argument("--observation")
    i.add_argument("--sampler", choices=("mh", "sir"))
    i.add_argument("--trial-steps", type=int, default=50_000)
    i.add_argument("--main-steps", type=int, default=100_000)
    i.add_argument("--thin", type=int, default=100)
    i.add_argument("--prior-draws", type=int, default=50_000)
    i.add_argument("--resample-draws", type=int, default=1_000)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("evaluate", help="compare two sample CSVs")
    e.add_argument("a")
    e.add_argument("b")
    e.add_argument("--p", type=int, choices=(1, 2), default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="run a TOML-configured experiment grid")
    b.add_argument("--config", required=True)
    b.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
    b.add_argument("--out")
    b.set_defaults(func=cmd_benchmark)

    r = sub.add_parser("report", help="rebuild tables and plots from a results directory")
    r.add_argument("--results", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
