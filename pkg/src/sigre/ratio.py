"""Amortised likelihood-to-evidence ratio estimation with kernel logistic regression.

Pipeline
--------
1. :func:`build_training_set` pairs every simulated ``(x_i, th_i)`` with
   label 1 and ``round(K N)`` shuffled pairs ``(x_i, th_j), j != i`` with
   label 0.
2. The product kernel ``k(x, x') l(th, th')`` is compressed with a Nystroem
   map over ``q`` landmark pairs.
3. :func:`fit_logistic` solves the L2-regularised logistic problem on the
   Nystroem features (intercept unpenalised).
4. The fitted logit is the estimated log-ratio; ``sigmoid(logit)`` is the
   classifier decision.

The series-kernel factor does not depend on ``l``'s lengthscales or on the
regularisation strength, so it is computed once per dataset and reused by
every tuning trial and cross-validation fold (:class:`SeriesGram`).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.special import expit, log_expit

from . import nystroem as nys
from .errors import NonFinite
from .kernels import (
    K2Kernel,
    ParamKernel,
    AnisoRbfConfig,
    SignatureKernel,
    SummaryRbfKernel,
    series_kernel_from_dict,
)
from .series import Dataset, TimeSeries
from .simulators import bespoke_summaries, prior_from_dict

__all__ = [
    "TrainingSet",
    "LogisticModel",
    "RatioEstimator",
    "TuneSpace",
    "TuneResult",
    "SeriesGram",
    "build_training_set",
    "logistic_objective",
    "fit_logistic",
    "fit_ratio_estimator",
    "decision",
    "log_ratio",
    "unnormalized_posterior",
    "tune",
    "cv_log_loss",
    "make_series_kernel",
    "METHODS",
]

METHODS = ("signature", "k2", "bespoke-rbf")
MAX_ITER = 500
GTOL = 1e-6


# ---------------------------------------------------------------------------
# training pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Index pairs into a :class:`Dataset` with binary labels.

    Row ``r`` is the pair ``(series[x_index[r]], thetas[theta_index[r]])``.
    """

    x_index: np.ndarray
    theta_index: np.ndarray
    labels: np.ndarray
    K: float

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    def pairs(self, data: Dataset) -> list:
        return [(data.series[i], data.thetas[j]) for i, j in zip(self.x_index, self.theta_index)]


def _negative_pairs(members: np.ndarray, K: float, rng) -> tuple[np.ndarray, np.ndarray]:
    n = members.size
    n_neg = int(round(K * n))
    passes, rem = divmod(n_neg, n)
    chunks = [rng.permutation(n) for _ in range(passes)]
    if rem:
        chunks.append(rng.permutation(n)[:rem])
    xi = np.concatenate(chunks) if chunks else np.empty(0, dtype=int)
    tj = rng.integers(0, n - 1, size=xi.size)
    tj = tj + (tj >= xi)
    return members[xi], members[tj]


def build_training_set(data: Dataset | int, K: float, rng, members: np.ndarray | None = None
                       ) -> TrainingSet:
    """Positives for every member plus ``round(K * n)`` derangement-constrained negatives.

    Series indices for negatives are drawn without replacement within each
    full pass over the members, so with ``K > 1`` a series repeats across
    passes. ``members`` restricts both positives and negatives to a subset
    of the dataset (used for cross-validation folds).
    """
    n_total = data if isinstance(data, int) else len(data)
    members = np.arange(n_total) if members is None else np.asarray(members, dtype=int)
    if members.size < 2:
        raise ValueError("need at least 2 entries to form negative pairs")
    if not K > 0:
        raise ValueError("K must be positive")
    nx, nt = _negative_pairs(members, K, rng)
    x_index = np.concatenate([members, nx])
    theta_index = np.concatenate([members, nt])
    labels = np.concatenate([np.ones(members.size), np.zeros(nx.size)])
    return TrainingSet(x_index, theta_index, labels, float(K))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    omega: float
    converged: bool = True
    iterations: int = 0

    def logit(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features) @ self.weights + self.intercept


def logistic_objective(params: np.ndarray, X: np.ndarray, z: np.ndarray, omega: float):
    """Summed logistic loss plus ``omega/2 |w|^2``; ``params = [w..., b]``.

    Returns ``(value, gradient)``.
    """
    w, b = params[:-1], params[-1]
    f = X @ w + b
    # log(1 + e^f) - z f, computed stably
    loss = np.sum(-log_expit(-f) - z * f) + 0.5 * omega * np.dot(w, w)
    resid = expit(f) - z
    grad = np.empty_like(params)
    grad[:-1] = X.T @ resid + omega * w
    grad[-1] = resid.sum()
    return float(loss), grad


def fit_logistic(features: np.ndarray, labels: np.ndarray, omega: float,
                 max_iter: int = MAX_ITER, gtol: float = GTOL) -> LogisticModel:
    """L-BFGS fit of the regularised logistic regression."""
    X = np.asarray(features, dtype=np.float64)
    z = np.asarray(labels, dtype=np.float64)
    if X.shape[0] != z.size:
        raise ValueError("features and labels disagree in length")
    if not omega > 0:
        raise ValueError("omega must be positive")
    if not np.all(np.isfinite(X)):
        raise NonFinite("non-finite features")
    x0 = np.zeros(X.shape[1] + 1)
    res = optimize.minimize(logistic_objective, x0, args=(X, z, omega), jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": gtol})
    if not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
        raise NonFinite("logistic loss became non-finite")
    return LogisticModel(res.x[:-1].copy(), float(res.x[-1]), float(omega), bool(res.success),
                         int(res.nit))


def mean_log_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(-log_expit(logits) * labels - log_expit(-logits) * (1 - labels)))


# ---------------------------------------------------------------------------
# series-kernel cache
# ---------------------------------------------------------------------------


def make_series_kernel(method: str, observation: TimeSeries, data: Dataset | None = None,
                       model_kind: str = "", **opts):
    """Base series kernel for a method, configured from the observation.

    ``signature`` uses an RBF static kernel with the median-heuristic scale;
    ``k2`` fixes its MMD bandwidth from the observation; ``bespoke-rbf``
    standardises summaries with the training data's mean and spread.
    """
    from .kernels import k2_kernel_for, signature_kernel_for

    if method == "signature":
        return signature_kernel_for(observation, **opts)
    if method == "k2":
        return k2_kernel_for(observation, opts.get("epsilon", 1.0))
    if method == "bespoke-rbf":
        S = np.array([bespoke_summaries(s, model_kind) for s in data.series])
        spread = S.std(axis=0)
        spread[spread <= 0] = 1.0
        return SummaryRbfKernel(lambda s: bespoke_summaries(s, model_kind), opts.get("scale", 1.0),
                                S.mean(axis=0), spread, model_kind)
    raise ValueError(f"unknown method {method!r}")


class SeriesGram:
    """Series-kernel matrix over a dataset, with its tunable part factored out.

    For the signature kernel the matrix is fixed. For K2 and the summary
    RBF the cached quantity is a squared distance and :meth:`matrix`
    exponentiates it for a given ``epsilon``.
    """

    def __init__(self, kernel, series: Sequence[TimeSeries]):
        self.kernel = kernel
        self.series = tuple(series)
        if isinstance(kernel, K2Kernel):
            self.base = kernel.mmd_cross(self.series, self.series, symmetric=True)
        elif isinstance(kernel, SummaryRbfKernel):
            self.base = kernel.sqdist_cross(self.series, self.series)
        else:
            self.base = kernel.gram(self.series)

    @property
    def tunable(self) -> bool:
        return not isinstance(self.kernel, SignatureKernel)

    def matrix(self, epsilon: float | None = None) -> np.ndarray:
        if not self.tunable:
            return self.base
        return np.exp(-self.base / float(epsilon))

    def kernel_with(self, epsilon: float | None = None):
        if isinstance(self.kernel, K2Kernel):
            return self.kernel.with_epsilon(epsilon)
        if isinstance(self.kernel, SummaryRbfKernel):
            return self.kernel.with_scale(epsilon)
        return self.kernel


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RatioEstimator:
    """Trained ratio estimator ``log r(x, th) = w . phi(x, th) + b``."""

    series_kernel: object
    param_kernel: ParamKernel
    landmark_series: tuple
    landmark_thetas: np.ndarray
    projection: np.ndarray
    model: LogisticModel
    prior: object = None
    landmark_index: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def nystroem(self) -> nys.NystroemMap:
        from .kernels import ProductKernel

        return nys.NystroemMap(list(zip(self.landmark_series, self.landmark_thetas)), self.projection,
                               np.empty(0), ProductKernel(self.series_kernel, self.param_kernel),
                               self.landmark_index)

    def series_row(self, x: TimeSeries) -> np.ndarray:
        return self.series_kernel.cross([x], list(self.landmark_series))[0]

    def log_ratio_fn(self, x: TimeSeries) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorised ``theta -> log r(x, theta)`` with the series factor cached."""
        kx = self.series_row(x)
        proj_w = self.projection.T @ self.model.weights
        b = self.model.intercept
        lt = self.landmark_thetas
        pk = self.param_kernel

        def f(theta):
            th = np.asarray(theta, dtype=np.float64)
            single = th.ndim == 1
            val = (pk.cross(np.atleast_2d(th), lt) * kx) @ proj_w + b
            return float(val[0]) if single else val

        return f

    def log_ratio_pairs(self, xs: Sequence[TimeSeries], thetas) -> np.ndarray:
        """``log r(xs[i], thetas[i])`` for aligned lists of series and parameters."""
        th = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        if len(xs) != th.shape[0]:
            raise ValueError("xs and thetas disagree in length")
        kcols = (self.series_kernel.cross(list(xs), list(self.landmark_series))
                 * self.param_kernel.cross(th, self.landmark_thetas))
        return self.model.logit(kcols @ self.projection.T)

    def features(self, x: TimeSeries, theta) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        kcols = self.series_row(x)[None, :] * self.param_kernel.cross(th, self.landmark_thetas)
        return kcols @ self.projection.T

    def to_json(self) -> dict:
        blob = {
            "series_kernel": self.series_kernel.to_dict(),
            "lengthscales": list(self.param_kernel.config.lengthscales),
            "nystroem": {
                "landmark_index": None if self.landmark_index is None else self.landmark_index.tolist(),
                "landmark_thetas": self.landmark_thetas.tolist(),
                "landmark_series": [{"times": s.times.tolist(), "values": s.values.tolist()}
                                    for s in self.landmark_series],
                "projection": self.projection.tolist(),
            },
            "weights": self.model.weights.tolist(),
            "intercept": self.model.intercept,
            "omega": self.model.omega,
            "prior": None if self.prior is None else self.prior.to_dict(),
            "info": self.info,
        }
        blob["config_hash"] = config_hash(blob)
        return blob

    @classmethod
    def from_json(cls, blob: dict) -> "RatioEstimator":
        ny = blob["nystroem"]
        series = tuple(TimeSeries(s["values"], s["times"]) for s in ny["landmark_series"])
        idx = ny.get("landmark_index")
        return cls(
            series_kernel_from_dict(blob["series_kernel"]),
            ParamKernel(AnisoRbfConfig(tuple(blob["lengthscales"]))),
            series,
            np.array(ny["landmark_thetas"], dtype=np.float64),
            np.array(ny["projection"], dtype=np.float64),
            LogisticModel(np.array(blob["weights"]), float(blob["intercept"]), float(blob["omega"])),
            None if blob.get("prior") is None else prior_from_dict(blob["prior"]),
            None if idx is None else np.array(idx),
            blob.get("info", {}),
        )


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def log_ratio(est: RatioEstimator, x: TimeSeries, theta) -> float | np.ndarray:
    return est.log_ratio_fn(x)(theta)


def decision(est: RatioEstimator, x: TimeSeries, theta) -> float | np.ndarray:
    return expit(log_ratio(est, x, theta))


def unnormalized_posterior(est: RatioEstimator, x: TimeSeries, theta) -> float | np.ndarray:
    """``r(x, theta) p(theta)``; exactly 0 outside the prior's support."""
    lr = np.asarray(log_ratio(est, x, theta), dtype=np.float64)
    lp = np.asarray(est.prior.logpdf(theta), dtype=np.float64)
    inside = np.isfinite(lp)
    out = np.where(inside, np.exp(lr + np.where(inside, lp, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def _landmark_rows(n_pairs: int, q: int, rng) -> np.ndarray:
    if n_pairs <= q:
        return np.arange(n_pairs)
    return np.sort(rng.choice(n_pairs, size=q, replace=False))


def _fit_on(ts: TrainingSet, landmarks: np.ndarray, Kx: np.ndarray, thetas: np.ndarray,
            lengthscales, omega: float):
    pk = ParamKernel(AnisoRbfConfig(tuple(lengthscales)))
    lx, lt = ts.x_index[landmarks], ts.theta_index[landmarks]
    lth = thetas[lt]
    gram = Kx[np.ix_(lx, lx)] * pk.gram(lth)
    projection, lam = nys.fit_from_gram(gram)
    kcols = Kx[np.ix_(ts.x_index, lx)] * pk.cross(thetas[ts.theta_index], lth)
    feats = kcols @ projection.T
    model = fit_logistic(feats, ts.labels, omega)
    return pk, projection, model, lam


def fit_ratio_estimator(data: Dataset, gram: SeriesGram, *, lengthscales, omega: float,
                        epsilon: float | None = None, K: float = 1.0, q: int | None = None,
                        rng=None, prior=None) -> RatioEstimator:
    """Train a ratio estimator on ``data`` with fixed hyperparameters."""
    rng = np.random.default_rng(rng)
    ts = build_training_set(data, K, rng)
    q = len(ts) if q is None else q
    landmarks = _landmark_rows(len(ts), q, rng)
    Kx = gram.matrix(epsilon)
    pk, projection, model, lam = _fit_on(ts, landmarks, Kx, data.thetas, lengthscales, omega)
    lx = ts.x_index[landmarks]
    return RatioEstimator(
        gram.kernel_with(epsilon), pk, tuple(data.series[i] for i in lx),
        data.thetas[ts.theta_index[landmarks]].copy(), projection, model, prior,
        landmarks, {"K": K, "q": int(landmarks.size), "retained": int(lam.size),
                    "converged": model.converged, "iterations": model.iterations},
    )


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuneSpace:
    """Log-uniform search priors and the search strategy.

    ``search="tpe"`` runs a tree-structured Parzen estimator (hyperopt);
    ``search="random"`` draws every trial independently from the priors.
    """

    lengthscale_bounds: tuple = (1e-3, 1e3)
    omega_bounds: tuple = (1e-5, 1e4)
    epsilon_bounds: tuple = (1e-3, 1e3)
    folds: int = 5
    trials: int = 30
    search: str = "tpe"

    def __post_init__(self):
        for lo, hi in (self.lengthscale_bounds, self.omega_bounds, self.epsilon_bounds):
            if not 0 < lo < hi:
                raise ValueError("bounds must satisfy 0 < lower < upper")
        if self.trials < 1 or self.folds < 2:
            raise ValueError("need trials >= 1 and folds >= 2")
        if self.search not in ("tpe", "random"):
            raise ValueError(f"unknown search {self.search!r}; expected 'tpe' or 'random'")


@dataclass(frozen=True)
class TuneResult:
    lengthscales: tuple
    omega: float
    epsilon: float | None
    cv_loss: float
    history: list = field(default_factory=list, repr=False)


def _log_uniform(rng, bounds, size=None):
    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    return np.exp(rng.uniform(lo, hi, size=size))


def _folds(n: int, k: int, rng) -> list:
    perm = rng.permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def cv_log_loss(gram: SeriesGram, thetas: np.ndarray, splits: list, Kx_eps: np.ndarray,
                lengthscales, omega: float, K: float = 1.0) -> float:
    """Mean held-out log-loss over prepared ``(train_set, landmarks, held)`` splits.

    Every pair ``(x_i, theta_j)`` with ``i, j`` in ``held`` is scored: the
    diagonal as positives, the rest as negatives. Negatives carry ``K`` times
    the positive weight, matching the training class balance. The logit is
    linear in the Nystroem features, so the whole held-out logit matrix is
    ``A diag(v) B^T + b``.
    """
    losses = []
    for train, landmarks, held in splits:
        pk, projection, model, _ = _fit_on(train, landmarks, Kx_eps, thetas, lengthscales, omega)
        lx, lt = train.x_index[landmarks], train.theta_index[landmarks]
        v = projection.T @ model.weights
        A = Kx_eps[np.ix_(held, lx)] * v
        B = pk.cross(thetas[held], thetas[lt])
        logits = A @ B.T + model.intercept
        pos = float(np.mean(-log_expit(np.diag(logits))))
        k = len(held)
        if k < 2:
            losses.append(pos)
            continue
        off = ~np.eye(k, dtype=bool)
        neg = float(np.mean(-log_expit(-logits[off])))
        losses.append((pos + K * neg) / (1.0 + K))
    return float(np.mean(losses))


def tune(space: TuneSpace, data: Dataset, gram: SeriesGram, rng, *, K: float = 1.0,
         q: int | None = None) -> TuneResult:
    """Search the log-uniform priors for the lowest k-fold CV log-loss.

    Folds partition the positive entries. Each fold's training negatives
    are drawn from its training members only and are fixed across trials,
    so every trial sees identical splits. Held-out members are scored on
    all their cross pairs (see :func:`cv_log_loss`). Failed trials score ``inf``. Ties resolve
    to the earliest trial.
    """
    rng = np.random.default_rng(rng)
    n = len(data)
    dim = data.thetas.shape[1]
    splits = []
    for held in _folds(n, space.folds, rng):
        train_members = np.setdiff1d(np.arange(n), held)
        train = build_training_set(n, K, rng, members=train_members)
        qq = len(train) if q is None else q
        splits.append((train, _landmark_rows(len(train), qq, rng), held))

    history = []

    def score(ls, omega, eps):
        try:
            loss = cv_log_loss(gram, data.thetas, splits, gram.matrix(eps), ls, omega, K)
        except (NonFinite, ValueError, np.linalg.LinAlgError):
            loss = math.inf
        history.append({"trial": len(history), "lengthscales": ls, "omega": omega, "epsilon": eps,
                        "loss": loss})
        return loss

    if space.search == "random":
        for _ in range(space.trials):
            ls = tuple(_log_uniform(rng, space.lengthscale_bounds, dim).tolist())
            omega = float(_log_uniform(rng, space.omega_bounds))
            eps = float(_log_uniform(rng, space.epsilon_bounds)) if gram.tunable else None
            score(ls, omega, eps)
    else:
        _tpe(space, dim, gram.tunable, score, rng)
    best = history[int(np.argmin([h["loss"] for h in history]))]
    return TuneResult(best["lengthscales"], best["omega"], best["epsilon"], best["loss"], history)


def _tpe(space: TuneSpace, dim: int, tunable: bool, score, rng) -> None:
    import logging

    from hyperopt import STATUS_FAIL, STATUS_OK, Trials, fmin, hp, tpe
    from hyperopt.exceptions import AllTrialsFailed

    logging.getLogger("hyperopt").setLevel(logging.WARNING)

    def log_uniform(name, bounds):
        return hp.loguniform(name, math.log(bounds[0]), math.log(bounds[1]))

    priors = {f"l{j}": log_uniform(f"l{j}", space.lengthscale_bounds) for j in range(dim)}
    priors["omega"] = log_uniform("omega", space.omega_bounds)
    if tunable:
        priors["epsilon"] = log_uniform("epsilon", space.epsilon_bounds)

    def objective(p):
        ls = tuple(float(p[f"l{j}"]) for j in range(dim))
        loss = score(ls, float(p["omega"]), float(p["epsilon"]) if tunable else None)
        return {"loss": loss, "status": STATUS_OK} if math.isfinite(loss) else {"status": STATUS_FAIL}

    try:
        fmin(objective, priors, algo=tpe.suggest, max_evals=space.trials, trials=Trials(),
             rstate=np.random.default_rng(rng.integers(2**63)), show_progressbar=False)
    except AllTrialsFailed:
        pass  # every trial is already in the history with an infinite loss
