"""Benchmark simulators, their priors and likelihoods, and hand-crafted summaries.

Models
------
``ou``   discretised Ornstein-Uhlenbeck process, 1 channel, T + 1 points.
``ma2``  second-order moving average, 1 channel.
``gse``  general stochastic epidemic (Gillespie), channels (susceptible, infected).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from scipy import linalg, signal, stats

from .errors import NotPositiveDefinite
from .series import Dataset, TimeSeries

__all__ = [
    "OUConfig",
    "MA2Config",
    "GSEConfig",
    "UniformBox",
    "TriangleMA2",
    "GammaProduct",
    "prior_from_dict",
    "simulate_ou",
    "ou_loglik",
    "simulate_ma2",
    "ma2_loglik",
    "simulate_gse",
    "gillespie_trajectory",
    "bespoke_summaries",
    "Model",
    "get_model",
    "simulate_dataset",
    "LOGVAR_FLOOR",
]

LOGVAR_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------


class _Prior:
    dim: int

    def logpdf(self, theta) -> np.ndarray | float:
        th = np.asarray(theta, dtype=np.float64)
        single = th.ndim == 1
        out = self._logpdf(np.atleast_2d(th))
        return float(out[0]) if single else out

    def pdf(self, theta):
        return np.exp(self.logpdf(theta))

    def contains(self, theta) -> np.ndarray | bool:
        lp = self.logpdf(theta)
        return np.isfinite(lp)


@dataclass(frozen=True)
class UniformBox(_Prior):
    lows: tuple
    highs: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lows)
        hi = tuple(float(v) for v in self.highs)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("need lows < highs of equal length")
        object.__setattr__(self, "lows", lo)
        object.__setattr__(self, "highs", hi)

    @property
    def dim(self) -> int:
        return len(self.lows)

    def sample(self, rng, n: int | None = None) -> np.ndarray:
        size = (self.dim,) if n is None else (n, self.dim)
        return rng.uniform(self.lows, self.highs, size=size)

    def _logpdf(self, th):
        lo, hi = np.array(self.lows), np.array(self.highs)
        inside = np.all((th >= lo) & (th <= hi), axis=1)
        return np.where(inside, -np.sum(np.log(hi - lo)), -np.inf)

    def proposal_scale(self) -> np.ndarray:
        return 0.1 * (np.array(self.highs) - np.array(self.lows))

    def to_dict(self) -> dict:
        return {"kind": "uniform", "lows": list(self.lows), "highs": list(self.highs)}


@dataclass(frozen=True)
class TriangleMA2(_Prior):
    """Uniform on ``th1 + th2 > -1, th1 - th2 < 1, th2 < 1``.

    Vertices (-2, 1), (2, 1), (0, -1); area 4.
    """

    AREA = 4.0

    @property
    def dim(self) -> int:
        return 2

    @staticmethod
    def _inside(th):
        t1, t2 = th[:, 0], th[:, 1]
        return (t1 + t2 > -1) & (t1 - t2 < 1) & (t2 < 1)

    def sample(self, rng, n: int | None = None) -> np.ndarray:
        m = 1 if n is None else n
        out = np.empty((0, 2))
        while out.shape[0] < m:
            cand = rng.uniform((-2.0, -1.0), (2.0, 1.0), size=(2 * (m - out.shape[0]) + 4, 2))
            out = np.vstack([out, cand[self._inside(cand)]])
        out = out[:m]
        return out[0] if n is None else out

    def _logpdf(self, th):
        return np.where(self._inside(th), -math.log(self.AREA), -np.inf)

    def proposal_scale(self) -> np.ndarray:
        return np.array([0.4, 0.2])

    def to_dict(self) -> dict:
        return {"kind": "triangle_ma2"}


@dataclass(frozen=True)
class GammaProduct(_Prior):
    """Independent Gamma(shape, scale) coordinates."""

    shapes: tuple
    scales: tuple

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(float(v) for v in self.shapes))
        object.__setattr__(self, "scales", tuple(float(v) for v in self.scales))

    @property
    def dim(self) -> int:
        return len(self.shapes)

    def sample(self, rng, n: int | None = None) -> np.ndarray:
        size = (self.dim,) if n is None else (n, self.dim)
        return rng.gamma(self.shapes, self.scales, size=size)

    def _logpdf(self, th):
        with np.errstate(divide="ignore"):
            lp = stats.gamma.logpdf(th, a=np.array(self.shapes), scale=np.array(self.scales))
        lp = np.where(th > 0, lp, -np.inf)
        return lp.sum(axis=1)

    def proposal_scale(self) -> np.ndarray:
        return np.sqrt(np.array(self.shapes)) * np.array(self.scales)

    def to_dict(self) -> dict:
        return {"kind": "gamma", "shapes": list(self.shapes), "scales": list(self.scales)}


def prior_from_dict(d: dict):
    kind = d["kind"]
    if kind == "uniform":
        return UniformBox(tuple(d["lows"]), tuple(d["highs"]))
    if kind == "triangle_ma2":
        return TriangleMA2()
    if kind == "gamma":
        return GammaProduct(tuple(d["shapes"]), tuple(d["scales"]))
    raise ValueError(f"unknown prior kind {kind!r}")


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OUConfig:
    dt: float = 0.2
    steps: int = 50
    x0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.steps < 2:
            raise ValueError("need dt > 0 and steps >= 2")


def simulate_ou(theta, cfg: OUConfig = OUConfig(), rng=None, innovations=None) -> TimeSeries:
    """Run ``x_i = th1 e^th2 dt + (1 - th1 dt) x_{i-1} + eps_i / 2`` with ``eps_i ~ N(0, dt)``.

    ``innovations`` overrides the ``eps_i`` draws (length ``steps``).
    """
    th1, th2 = float(theta[0]), float(theta[1])
    if innovations is None:
        innovations = rng.normal(0.0, math.sqrt(cfg.dt), size=cfg.steps)
    eps = np.asarray(innovations, dtype=np.float64)
    a = 1.0 - th1 * cfg.dt
    drive = th1 * math.exp(th2) * cfg.dt + 0.5 * eps
    body, _ = signal.lfilter([1.0], [1.0, -a], drive, zi=[a * cfg.x0])
    return TimeSeries(np.concatenate([[cfg.x0], body]))


def ou_loglik(x: TimeSeries | np.ndarray, theta, dt: float = 0.2) -> float:
    """Gaussian transition log-likelihood, conditioned on the first point."""
    v = x.values[:, 0] if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    th1, th2 = float(theta[0]), float(theta[1])
    mean = th1 * math.exp(th2) * dt + (1.0 - th1 * dt) * v[:-1]
    var = dt / 4.0
    r = v[1:] - mean
    return float(-0.5 * (r.size * math.log(2 * math.pi * var) + np.dot(r, r) / var))


# ---------------------------------------------------------------------------
# MA(2)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MA2Config:
    length: int = 50

    def __post_init__(self):
        if self.length < 3:
            raise ValueError("length must be >= 3")


def simulate_ma2(theta, cfg: MA2Config = MA2Config(), rng=None) -> TimeSeries:
    th1, th2 = float(theta[0]), float(theta[1])
    eps = rng.normal(size=cfg.length + 2)
    return TimeSeries(eps[2:] + th1 * eps[1:-1] + th2 * eps[:-2])


def ma2_loglik(x: TimeSeries | np.ndarray, theta) -> float:
    """Exact zero-mean Gaussian log-density with the banded MA(2) covariance."""
    v = x.values[:, 0] if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    th1, th2 = float(theta[0]), float(theta[1])
    n = v.size
    ab = np.zeros((3, n))
    ab[0] = 1.0 + th1 ** 2 + th2 ** 2
    ab[1, :-1] = th1 + th1 * th2
    ab[2, :-2] = th2
    try:
        chol = linalg.cholesky_banded(ab, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"MA(2) covariance not positive definite at {theta}") from exc
    alpha = linalg.cho_solve_banded((chol, True), v)
    logdet = 2.0 * np.sum(np.log(chol[0]))
    return float(-0.5 * (n * math.log(2 * math.pi) + logdet + v @ alpha))


# ---------------------------------------------------------------------------
# General stochastic epidemic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GSEConfig:
    population: int = 100
    initial_infected: int = 5
    obs_dt: float = 0.5
    obs_count: int = 100

    def __post_init__(self):
        if not 1 <= self.initial_infected < self.population:
            raise ValueError("need 1 <= initial_infected < population")

    @property
    def max_events(self) -> int:
        s0 = self.population - self.initial_infected
        return 2 * s0 + self.initial_infected


@numba.njit(cache=True)
def _gillespie(x0, y0, beta, gamma, uniforms, obs_times, record):
    n_obs = obs_times.size
    grid = np.empty((n_obs, 2))
    max_ev = uniforms.shape[0]
    ev_t = np.empty(max_ev + 1)
    ev_s = np.empty((max_ev + 1, 2), dtype=np.int64)
    x, y = x0, y0
    t = 0.0
    k = 0
    n_ev = 0
    ev_t[0] = 0.0
    ev_s[0, 0] = x
    ev_s[0, 1] = y
    for e in range(max_ev):
        r_inf = beta * x * y
        r_rec = gamma * y
        total = r_inf + r_rec
        if total <= 0.0:
            break
        t += -math.log(1.0 - uniforms[e, 0]) / total
        while k < n_obs and obs_times[k] < t:
            grid[k, 0] = x
            grid[k, 1] = y
            k += 1
        if k >= n_obs and not record:
            break
        if uniforms[e, 1] * total < r_inf:
            x -= 1
            y += 1
        else:
            y -= 1
        n_ev += 1
        ev_t[n_ev] = t
        ev_s[n_ev, 0] = x
        ev_s[n_ev, 1] = y
    while k < n_obs:
        grid[k, 0] = x
        grid[k, 1] = y
        k += 1
    return grid, ev_t[: n_ev + 1], ev_s[: n_ev + 1]


def _gse_run(theta, cfg: GSEConfig, rng, record: bool):
    beta, gamma = float(theta[0]), float(theta[1])
    if beta < 0 or gamma < 0:
        raise ValueError("rates must be non-negative")
    uniforms = rng.random((cfg.max_events, 2))
    obs_times = np.arange(cfg.obs_count + 1) * cfg.obs_dt
    x0 = cfg.population - cfg.initial_infected
    return obs_times, _gillespie(x0, cfg.initial_infected, beta, gamma, uniforms, obs_times, record)


def simulate_gse(theta, cfg: GSEConfig = GSEConfig(), rng=None) -> TimeSeries:
    """Exact Gillespie run observed as (susceptible, infected) at ``i * obs_dt``."""
    times, (grid, _, _) = _gse_run(theta, cfg, rng, False)
    return TimeSeries(grid, times)


def gillespie_trajectory(theta, cfg: GSEConfig = GSEConfig(), rng=None):
    """Full event record ``(times, states)``; states hold (susceptible, infected)."""
    _, (_, ev_t, ev_s) = _gse_run(theta, cfg, rng, True)
    return ev_t, ev_s


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


def _acf(v: np.ndarray, lag: int) -> float:
    c = v - v.mean()
    den = np.dot(c, c)
    if den <= 0:
        return 0.0
    return float(np.dot(c[:-lag], c[lag:]) / den)


def _logvar(v: np.ndarray) -> float:
    return float(math.log(max(np.var(v), LOGVAR_FLOOR)))


def _crosscorr(a: np.ndarray, b: np.ndarray) -> float:
    ca, cb = a - a.mean(), b - b.mean()
    den = math.sqrt(np.dot(ca, ca) * np.dot(cb, cb))
    if den <= 0:
        return 0.0
    return float(np.dot(ca, cb) / den)


def bespoke_summaries(x: TimeSeries, model_kind: str) -> np.ndarray:
    """Hand-crafted statistics per model.

    Zero-variance channels give autocorrelation and cross-correlation 0 and
    log-variance ``log(LOGVAR_FLOOR)``.
    """
    v = x.values
    if model_kind == "ou":
        if v.shape[1] != 1:
            raise ValueError("OU summaries need one channel")
        prev, nxt = v[:-1, 0], v[1:, 0]
        slope, intercept = np.polyfit(prev, nxt, 1) if np.var(prev) > 0 else (0.0, float(nxt.mean()))
        return np.array([intercept, slope, v[:, 0].mean()])
    if model_kind == "ma2":
        if v.shape[1] != 1:
            raise ValueError("MA(2) summaries need one channel")
        s = v[:, 0]
        return np.array([np.var(s), _acf(s, 1), _acf(s, 2)])
    if model_kind == "gse":
        if v.shape[1] != 2:
            raise ValueError("GSE summaries need two channels")
        X, Y = v[:, 0], v[:, 1]
        return np.array([X.mean(), Y.mean(), _logvar(X), _logvar(Y), _acf(X, 1), _acf(Y, 1),
                         _acf(X, 2), _acf(Y, 2), _crosscorr(X, Y)])
    raise ValueError(f"unknown model kind {model_kind!r}")


# ---------------------------------------------------------------------------
# model registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """A simulator bundled with its prior, true parameter and (optional) likelihood."""

    kind: str
    prior: object
    theta_star: np.ndarray
    simulator: Callable
    loglik: Callable | None = None
    config: object = None
    extra: dict = field(default_factory=dict)

    def simulate(self, theta, rng) -> TimeSeries:
        return self.simulator(theta, self.config, rng)

    def observe(self, seed: int = 0) -> TimeSeries:
        """Pseudo-observed data at ``theta_star``; seed 0 is reserved for this."""
        return self.simulate(self.theta_star, np.random.default_rng(seed))

    def log_posterior(self, x: TimeSeries) -> Callable:
        if self.loglik is None:
            raise ValueError(f"model {self.kind!r} has no tractable likelihood")
        prior, ll = self.prior, self.loglik

        def target(theta):
            lp = prior.logpdf(theta)
            if not np.isfinite(lp):
                return -np.inf
            try:
                return ll(x, theta) + lp
            except NotPositiveDefinite:
                return -np.inf

        return target


def get_model(kind: str, **overrides) -> Model:
    if kind == "ou":
        cfg = OUConfig(**overrides)
        return Model("ou", UniformBox((0.0, -2.0), (1.0, 2.0)), np.array([0.5, 1.0]), simulate_ou,
                     lambda x, th: ou_loglik(x, th, cfg.dt), cfg)
    if kind == "ma2":
        cfg = MA2Config(**overrides)
        return Model("ma2", TriangleMA2(), np.array([0.6, 0.2]), simulate_ma2, ma2_loglik, cfg)
    if kind == "gse":
        cfg = GSEConfig(**overrides)
        return Model("gse", GammaProduct((0.1, 0.2), (2.0, 0.5)), np.array([1e-2, 1e-1]),
                     simulate_gse, None, cfg)
    raise ValueError(f"unknown model kind {kind!r}")


def simulate_dataset(model: Model, n: int, seed: int, thetas=None) -> Dataset:
    """Draw ``n`` prior-predictive pairs; entry ``i`` uses the stream ``(seed, i)``."""
    series, ths = [], []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        th = model.prior.sample(rng) if thetas is None else np.asarray(thetas[i], dtype=np.float64)
        series.append(model.simulate(th, rng))
        ths.append(th)
    return Dataset(tuple(series), np.array(ths), seed, {"model": model.kind})
