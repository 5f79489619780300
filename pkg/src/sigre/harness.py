"""Config-driven benchmark runs, result persistence and report emission.

A run covers the grid ``methods x budgets x seeds``. Each cell trains a
ratio estimator on ``budget`` prior-predictive simulations, samples its
posterior for the fixed pseudo-observation, and compares the samples with
a reference posterior that is computed once and cached on disk.

Every cell writes ``cells/<label>_b<budget>_s<seed>.json``. A cell whose
file exists with a matching hash is skipped on rerun. ``results.csv`` is
rebuilt from the cell files in grid order and excludes timings, so
identical configs give byte-identical CSVs; wall times go to
``timings.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
import traceback
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import bootstrap_ci, mean_distance, wasserstein
from .ratio import METHODS, SeriesGram, TuneSpace, fit_ratio_estimator, make_series_kernel, tune
from .samplers import (
    MHConfig,
    SIRConfig,
    SMCABCConfig,
    metropolis_hastings,
    read_samples,
    sir_resample,
    smc_abc,
    write_samples,
)
from .simulators import get_model, simulate_dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "MethodSpec",
    "ExperimentConfig",
    "ResultRecord",
    "run_experiment",
    "run_cell",
    "reference_posterior",
    "emit_report",
    "load_records",
    "cache_dir",
    "CACHE_ENV",
]

CACHE_ENV = "SIGRE_CACHE_DIR"
RESULT_FIELDS = ("model", "method", "kind", "K", "budget", "seed", "wasserstein", "mean_distance",
                 "status", "config_hash")


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MethodSpec:
    kind: str
    K: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ValueError(f"unknown method {self.kind!r}; expected one of {METHODS}")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not self.label:
            k = int(self.K) if float(self.K).is_integer() else self.K
            object.__setattr__(self, "label", self.kind if k == 1 else f"{self.kind}-{k}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Benchmark grid and every setting that affects its numbers.

    ``mh`` and ``sir`` configure posterior sampling inside cells;
    ``reference`` configures the ground-truth run (MH keys for OU and
    MA(2), SMC-ABC keys for GSE).
    """

    model: str
    methods: tuple
    budgets: tuple
    seeds: tuple = (0, 1, 2, 3, 4)
    trials: int = 30
    folds: int = 5
    search: str = "tpe"
    q: int | None = None
    dyadic_order: int = 0
    mh: dict = field(default_factory=dict)
    sir: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    metric_p: int = 1
    metric_cap: int = 1000
    observation_seed: int = 0
    out: str = "runs/experiment"

    def __post_init__(self):
        methods = tuple(m if isinstance(m, MethodSpec) else MethodSpec(**m) if isinstance(m, dict)
                        else MethodSpec(str(m)) for m in self.methods)
        if not methods:
            raise ValueError("need at least one method")
        if len({m.label for m in methods}) != len(methods):
            raise ValueError("method labels must be unique")
        budgets = tuple(int(b) for b in self.budgets)
        if not budgets or list(budgets) != sorted(budgets) or budgets[0] < 2:
            raise ValueError("budgets must be ascending and at least 2")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        get_model(self.model)

    @property
    def b_min(self) -> int:
        return self.budgets[0]

    def q_for(self, method: MethodSpec) -> int:
        return self.q if self.q is not None else int(round(self.b_min * (method.K + 1)))

    @classmethod
    def from_toml(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        default_k = raw.pop("K", 1.0)
        methods = []
        for m in raw.pop("methods"):
            if isinstance(m, str):
                methods.append(MethodSpec(m, default_k))
            else:
                methods.append(MethodSpec(**{"K": default_k, **m}))
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(methods=tuple(methods), **raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [asdict(m) for m in self.methods]
        d["budgets"], d["seeds"] = list(self.budgets), list(self.seeds)
        return d

    def reference_key(self) -> dict:
        return {"model": self.model, "observation_seed": self.observation_seed,
                "reference": self.reference}

    def cell_hash(self, method: MethodSpec, budget: int, seed: int) -> str:
        d = self.to_dict()
        for k in ("methods", "budgets", "seeds", "out"):
            d.pop(k)
        d.update(method=asdict(method), budget=budget, seed=seed, q=self.q_for(method))
        return _hash(d)


@dataclass(frozen=True)
class ResultRecord:
    model: str
    method: str
    kind: str
    K: float
    budget: int
    seed: int
    wasserstein: float
    mean_distance: float
    wall_time: float
    config_hash: str
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


# ---------------------------------------------------------------------------
# reference posterior
# ---------------------------------------------------------------------------


def cache_dir(default: str | os.PathLike | None = None) -> Path:
    root = os.environ.get(CACHE_ENV) or default or Path.home() / ".cache" / "sigre"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _mh_config(model, opts: dict) -> MHConfig:
    return MHConfig(tuple(model.theta_star), trial_scale=tuple(model.prior.proposal_scale()),
                    **{k: int(v) for k, v in opts.items()})


def reference_posterior(cfg: ExperimentConfig, cache: Path | None = None, log=None) -> np.ndarray:
    """Ground-truth posterior samples for ``cfg``'s model, cached by content hash.

    OU and MA(2) use MH on the exact likelihood; GSE uses SMC-ABC followed
    by resampling ``resample_draws`` (default 1000) particles.
    """
    cache = cache_dir(cache)
    key = _hash(cfg.reference_key())
    path = cache / f"reference_{cfg.model}_{key}.csv"
    if path.exists():
        return read_samples(path)
    model = get_model(cfg.model)
    x_obs = model.observe(cfg.observation_seed)
    rng = np.random.default_rng([cfg.observation_seed, 1])
    t0 = time.perf_counter()
    if model.loglik is not None:
        res = metropolis_hastings(model.log_posterior(x_obs), _mh_config(model, cfg.reference), rng)
        samples, side = res.samples, res.sidecar()
    else:
        opts = dict(cfg.reference)
        n_out = int(opts.pop("resample_draws", 1000))
        res = smc_abc(model.simulate, x_obs, model.prior, SMCABCConfig(**opts), rng)
        samples, side = res.resample(n_out, rng), res.sidecar()
    side.update(key=cfg.reference_key(), wall_time=time.perf_counter() - t0)
    if log:
        log(f"reference posterior for {cfg.model}: {samples.shape[0]} samples in {side['wall_time']:.1f}s")
    tmp = path.with_suffix(".tmp")
    write_samples(tmp, samples)
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True, default=str))
    tmp.replace(path)
    return samples


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------


def _streams(method: MethodSpec, budget: int, seed: int):
    # training data depends only on (seed, budget) so methods are compared on the same draws
    data_rng = np.random.default_rng([seed, budget])
    tag = zlib.crc32(method.label.encode())
    tune_rng, fit_rng, sample_rng = (np.random.default_rng(s) for s in
                                     np.random.SeedSequence([seed, budget, tag]).spawn(3))
    return data_rng, tune_rng, fit_rng, sample_rng


def run_cell(cfg: ExperimentConfig, method: MethodSpec, budget: int, seed: int,
             reference: np.ndarray):
    """Train, sample and score one grid cell. Returns ``(record, samples, info)``."""
    t0 = time.perf_counter()
    model = get_model(cfg.model)
    x_obs = model.observe(cfg.observation_seed)
    data_rng, tune_rng, fit_rng, sample_rng = _streams(method, budget, seed)
    data = simulate_dataset(model, budget, int(data_rng.integers(2**31)))
    opts = {"dyadic_order": cfg.dyadic_order} if method.kind == "signature" else {}
    kernel = make_series_kernel(method.kind, x_obs, data, model.kind, **opts)
    gram = SeriesGram(kernel, data.series)
    q = cfg.q_for(method)
    best = tune(TuneSpace(folds=cfg.folds, trials=cfg.trials, search=cfg.search), data, gram, tune_rng, K=method.K, q=q)
    est = fit_ratio_estimator(data, gram, lengthscales=best.lengthscales, omega=best.omega,
                              epsilon=best.epsilon, K=method.K, q=q, rng=fit_rng, prior=model.prior)
    lr = est.log_ratio_fn(x_obs)
    info = {"tune": {"lengthscales": list(best.lengthscales), "omega": best.omega,
                     "epsilon": best.epsilon, "cv_loss": best.cv_loss}, "estimator": est.info,
            "simulations": budget}
    if model.loglik is not None:
        prior = model.prior

        def target(theta):
            lp = prior.logpdf(theta)
            return lp + lr(theta) if np.isfinite(lp) else -math.inf

        res = metropolis_hastings(target, _mh_config(model, cfg.mh), sample_rng)
        samples = res.samples
        info["sampler"] = res.sidecar()
    else:
        sir = SIRConfig(**{k: int(v) for k, v in cfg.sir.items()})
        draws = model.prior.sample(sample_rng, sir.prior_draws)
        samples = sir_resample(draws, lr(draws), sir, sample_rng)
        info["sampler"] = {"prior_draws": sir.prior_draws, "resample_draws": sir.resample_draws}
    w = wasserstein(samples, reference, p=cfg.metric_p, cap=cfg.metric_cap, rng=seed)
    md = mean_distance(samples, reference)
    record = ResultRecord(cfg.model, method.label, method.kind, method.K, budget, seed, w, md,
                          time.perf_counter() - t0, cfg.cell_hash(method, budget, seed))
    return record, samples, info


def _cell_path(out: Path, method: MethodSpec, budget: int, seed: int) -> Path:
    return out / "cells" / f"{method.label}_b{budget}_s{seed}.json"


def _grid(cfg: ExperimentConfig):
    for method in cfg.methods:
        for budget in cfg.budgets:
            for seed in cfg.seeds:
                yield method, budget, seed


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None,
                   cache: str | os.PathLike | None = None, log=print) -> list:
    """Run (or resume) every cell of the grid and write ``results.csv``.

    Failed cells are recorded with ``status = "failed: ..."`` and NaN
    metrics; they are retried on the next run.
    """
    out = Path(out or cfg.out)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    (out / "samples").mkdir(exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    log = log or (lambda *_: None)
    reference = None
    records = []
    for method, budget, seed in _grid(cfg):
        path = _cell_path(out, method, budget, seed)
        h = cfg.cell_hash(method, budget, seed)
        if path.exists():
            blob = json.loads(path.read_text())
            if blob["record"]["config_hash"] == h and blob["record"]["status"] == "ok":
                records.append(ResultRecord(**blob["record"]))
                continue
        if reference is None:
            reference = reference_posterior(cfg, cache, log)
        try:
            rec, samples, info = run_cell(cfg, method, budget, seed, reference)
            write_samples(out / "samples" / f"{method.label}_b{budget}_s{seed}.csv", samples)
        except Exception as exc:  # any cell failure is recorded, not fatal
            rec = ResultRecord(cfg.model, method.label, method.kind, method.K, budget, seed,
                               math.nan, math.nan, 0.0, h, f"failed: {type(exc).__name__}: {exc}")
            info = {"traceback": traceback.format_exc()}
        path.write_text(json.dumps({"record": asdict(rec), "info": info}, indent=2, sort_keys=True,
                                   default=str))
        log(f"{rec.method:>16} budget={budget:<5} seed={seed:<3} W1={rec.wasserstein:.4f} "
            f"mean={rec.mean_distance:.4f} {rec.status} ({rec.wall_time:.1f}s)")
        records.append(rec)
    write_results(records, out)
    return records


def write_results(records, out: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in records:
        row = asdict(r)
        w.writerow([_fmt(row[k]) for k in RESULT_FIELDS])
    (out / "results.csv").write_text(buf.getvalue())
    timings = {f"{r.method}_b{r.budget}_s{r.seed}": r.wall_time for r in records}
    (out / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_records(path) -> list:
    """Read records back from a run directory or its ``results.csv``."""
    path = Path(path)
    if path.is_dir():
        path = path / "results.csv"
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(ResultRecord(row["model"], row["method"], row["kind"], float(row["K"]),
                                        int(row["budget"]), int(row["seed"]), float(row["wasserstein"]),
                                        float(row["mean_distance"]), math.nan, row["config_hash"],
                                        row["status"]))
    return records


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

METRICS = ("wasserstein", "mean_distance")
METRIC_LABELS = {"wasserstein": "Wasserstein distance", "mean_distance": "Posterior-mean distance"}


def _by_cell(records, metric):
    table: dict = {}
    for r in records:
        v = getattr(r, metric)
        if r.ok and np.isfinite(v):
            table.setdefault(r.method, {}).setdefault(r.budget, []).append(v)
    return table


def summarize(records, metric: str, replicates: int = 10_000) -> list:
    """Rows ``(method, budget, n, low, mean, high, median)`` in first-seen order."""
    rows = []
    for method, cells in _by_cell(records, metric).items():
        for budget in sorted(cells):
            v = np.asarray(cells[budget])
            if v.size >= 2:
                lo, mean, hi = bootstrap_ci(v, replicates=replicates, rng=0)
            else:
                lo = mean = hi = float(v[0])
            rows.append((method, budget, v.size, lo, mean, hi, float(np.median(v))))
    return rows


def median_table(records, metric: str) -> tuple:
    """``(methods, budgets, medians)`` with ``medians[i][j]`` NaN where a cell is empty."""
    cells = _by_cell(records, metric)
    methods = list(cells)
    budgets = sorted({b for c in cells.values() for b in c})
    med = [[float(np.median(cells[m][b])) if b in cells[m] else math.nan for b in budgets]
           for m in methods]
    return methods, budgets, med


def _plot(rows, metric: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sigre"
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = list(dict.fromkeys(r[0] for r in rows))
    for m in methods:
        sel = [r for r in rows if r[0] == m]
        b = [r[1] for r in sel]
        ax.plot(b, [r[4] for r in sel], marker="o", label=m)
        ax.fill_between(b, [r[3] for r in sel], [r[5] for r in sel], alpha=0.2)
    ax.set_xlabel("simulation budget")
    ax.set_ylabel(METRIC_LABELS[metric])
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(records, out: str | os.PathLike, replicates: int = 10_000) -> list:
    """Write CI summaries, median tables and SVG plots. Returns the paths written."""
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with open(out / "summary_ci.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "method", "budget", "n", "low", "mean", "high", "median"])
        for metric in METRICS:
            for row in summarize(records, metric, replicates):
                w.writerow([metric, *row])
    written.append(out / "summary_ci.csv")
    for metric in METRICS:
        methods, budgets, med = median_table(records, metric)
        csv_path, md_path = out / f"median_{metric}.csv", out / f"median_{metric}.md"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", *budgets])
            for m, vals in zip(methods, med):
                w.writerow([m, *(f"{v:.3f}" for v in vals)])
        lines = [f"| method | {' | '.join(str(b) for b in budgets)} |",
                 "|---" * (len(budgets) + 1) + "|"]
        best = [min((med[i][j] for i in range(len(methods)) if np.isfinite(med[i][j])), default=None)
                for j in range(len(budgets))]
        for i, m in enumerate(methods):
            cells = [f"**{v:.3f}**" if best[j] is not None and v == best[j] else f"{v:.3f}"
                     for j, v in enumerate(med[i])]
            lines.append(f"| {m} | {' | '.join(cells)} |")
        md_path.write_text(f"Median {METRIC_LABELS[metric].lower()} (best per budget in bold)\n\n"
                           + "\n".join(lines) + "\n")
        rows = summarize(records, metric, replicates)
        svg = out / f"{metric}.svg"
        _plot(rows, metric, svg)
        written += [csv_path, md_path, svg]
    return written
