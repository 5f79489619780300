"""Posterior samplers: adaptive Metropolis-Hastings, SIR and SMC-ABC."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import multivariate_normal

from .errors import AllWeightsDegenerate, BudgetTooSmall, ZeroAcceptance

__all__ = [
    "MHConfig",
    "MHResult",
    "SIRConfig",
    "SMCABCConfig",
    "SMCABCResult",
    "metropolis_hastings",
    "sir_resample",
    "smc_abc",
    "sq_distance",
    "write_samples",
    "read_samples",
]

MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class MHConfig:
    """Two-phase random-walk Metropolis-Hastings settings.

    ``trial_scale`` is the per-dimension standard deviation of the trial
    phase's diagonal proposal; ``None`` means 1 in every dimension.
    """

    init: tuple
    trial_steps: int = 50_000
    main_steps: int = 100_000
    thin: int = 100
    trial_scale: tuple | None = None

    def __post_init__(self):
        if self.trial_steps < 2 or self.main_steps < 1 or self.thin < 1:
            raise ValueError("steps and thin must be positive (trial_steps >= 2)")
        if self.main_steps % self.thin:
            raise ValueError("thin must divide main_steps")

    @property
    def dim(self) -> int:
        return len(self.init)


@dataclass(frozen=True, eq=False)
class MHResult:
    samples: np.ndarray
    acceptance: float
    trial_acceptance: float
    covariance: np.ndarray

    def __len__(self) -> int:
        return self.samples.shape[0]

    def sidecar(self) -> dict:
        return {"acceptance": self.acceptance, "trial_acceptance": self.trial_acceptance,
                "covariance": self.covariance.tolist()}


def _walk(log_target, x, lp, chol, z, logu, thin):
    steps = z.shape[0]
    out = np.empty((steps // thin, x.size))
    accepted = 0
    for i in range(steps):
        prop = x + chol @ z[i]
        lq = log_target(prop)
        if lq > -math.inf and logu[i] < lq - lp:
            x, lp = prop, lq
            accepted += 1
        if (i + 1) % thin == 0:
            out[(i + 1) // thin - 1] = x
    return out, x, lp, accepted / steps


def metropolis_hastings(log_target: Callable[[np.ndarray], float], cfg: MHConfig, rng) -> MHResult:
    """Random-walk MH with a trial run that calibrates the proposal covariance.

    Phase 1 uses a diagonal Gaussian proposal. Phase 2 uses ``l^2 Sigma``
    with ``l = 2 / sqrt(d)`` and ``Sigma`` the covariance of the second half
    of the trial chain (plus ``1e-8`` on the diagonal), and keeps every
    ``thin``-th state.
    """
    rng = np.random.default_rng(rng)
    x = np.asarray(cfg.init, dtype=np.float64).copy()
    d = x.size
    lp = float(log_target(x))
    if not np.isfinite(lp):
        raise ValueError("log_target must be finite at init")
    scale = np.ones(d) if cfg.trial_scale is None else np.asarray(cfg.trial_scale, dtype=np.float64)

    z = rng.standard_normal((cfg.trial_steps, d))
    logu = np.log(rng.random(cfg.trial_steps))
    trial, x, lp, acc_trial = _walk(log_target, x, lp, np.diag(scale), z, logu, 1)

    half = trial[cfg.trial_steps // 2:]
    sigma = np.atleast_2d(np.cov(half, rowvar=False)) + 1e-8 * np.eye(d)
    ell = 2.0 / math.sqrt(d)
    chol = ell * np.linalg.cholesky(sigma)

    z = rng.standard_normal((cfg.main_steps, d))
    logu = np.log(rng.random(cfg.main_steps))
    samples, _, _, acc = _walk(log_target, x, lp, chol, z, logu, cfg.thin)
    if acc < MIN_ACCEPTANCE:
        raise ZeroAcceptance(f"acceptance rate {acc:.2e} below {MIN_ACCEPTANCE}")
    return MHResult(samples, acc, acc_trial, sigma)


@dataclass(frozen=True)
class SIRConfig:
    prior_draws: int = 50_000
    resample_draws: int = 1_000

    def __post_init__(self):
        if not 0 < self.resample_draws <= self.prior_draws:
            raise ValueError("need 0 < resample_draws <= prior_draws")


def sir_resample(prior_samples, log_weights, cfg: SIRConfig, rng) -> np.ndarray:
    """Multinomial resampling of ``prior_samples`` with self-normalised weights."""
    rng = np.random.default_rng(rng)
    pts = np.asarray(prior_samples, dtype=np.float64)
    lw = np.asarray(log_weights, dtype=np.float64)
    if pts.shape[0] != lw.size:
        raise ValueError("samples and weights disagree in length")
    lw = np.where(np.isnan(lw), -np.inf, lw)
    top = lw.max() if lw.size else -np.inf
    if not np.isfinite(top):
        if top == np.inf:
            w = (lw == np.inf).astype(float)
        else:
            raise AllWeightsDegenerate("every log-weight is -inf")
    else:
        w = np.exp(lw - top)
    idx = rng.choice(lw.size, size=cfg.resample_draws, replace=True, p=w / w.sum())
    return pts[idx]


@dataclass(frozen=True)
class SMCABCConfig:
    """Population Monte Carlo ABC settings.

    ``initial_epsilon`` overrides the median-distance start of the
    tolerance schedule; ``max_rounds`` caps the number of shrinking rounds.
    """

    population: int = 500
    budget: int = 100_000
    epsilon_decay: float = 0.8
    kernel_scale: float = 2.0
    initial_epsilon: float | None = None
    max_rounds: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon_decay < 1:
            raise ValueError("epsilon_decay must lie in (0, 1)")
        if self.population < 2:
            raise ValueError("population must be at least 2")


@dataclass(frozen=True, eq=False)
class SMCABCResult:
    particles: np.ndarray
    weights: np.ndarray
    epsilons: list
    simulations: int
    rounds: int

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def resample(self, n: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return self.particles[rng.choice(self.weights.size, size=n, replace=True, p=self.weights)]

    def sidecar(self) -> dict:
        return {"epsilons": self.epsilons, "simulations": self.simulations, "rounds": self.rounds}


def sq_distance(x, y) -> float:
    """Squared Euclidean distance summed over time steps and channels."""
    a = getattr(x, "values", x)
    b = getattr(y, "values", y)
    return float(np.sum((np.asarray(a) - np.asarray(b)) ** 2))


def _weighted_cov(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    d = p.shape[1]
    c = np.atleast_2d(np.cov(p, rowvar=False, aweights=w, bias=True))
    return c + 1e-12 * np.eye(d) * max(1.0, float(np.trace(c)) / d)


def smc_abc(simulator: Callable, observation, prior, cfg: SMCABCConfig, rng,
            distance: Callable = sq_distance) -> SMCABCResult:
    """Adaptive population Monte Carlo ABC.

    Round 0 draws ``population`` particles from the prior and accepts them
    all; its median distance starts the tolerance schedule (unless
    ``initial_epsilon`` is set), which then shrinks by ``epsilon_decay``
    per round. Later rounds resample the weighted population, perturb with
    a Gaussian of covariance ``kernel_scale`` times the weighted population
    covariance, and keep proposals within the current tolerance. When the
    simulation budget runs out mid-round the last complete population is
    returned. ``simulator(theta, rng)`` must return a series.
    """
    rng = np.random.default_rng(rng)
    P = cfg.population
    if cfg.budget < P:
        raise BudgetTooSmall(f"budget {cfg.budget} smaller than population {P}")
    theta = np.atleast_2d(prior.sample(rng, P)).reshape(P, -1)
    dist = np.array([distance(simulator(t, rng), observation) for t in theta])
    used = P
    weights = np.full(P, 1.0 / P)
    eps = float(np.median(dist)) if cfg.initial_epsilon is None else float(cfg.initial_epsilon)
    epsilons: list = []
    rounds = 0
    while cfg.max_rounds is None or rounds < cfg.max_rounds:
        if used >= cfg.budget or not np.isfinite(eps):
            break
        cov = cfg.kernel_scale * _weighted_cov(theta, weights)
        chol = np.linalg.cholesky(cov)
        new = np.empty_like(theta)
        new_d = np.empty(P)
        filled = 0
        while filled < P and used < cfg.budget:
            j = rng.choice(P, p=weights)
            prop = theta[j] + chol @ rng.standard_normal(theta.shape[1])
            if not np.isfinite(prior.logpdf(prop)):
                continue
            dp = distance(simulator(prop, rng), observation)
            used += 1
            if dp <= eps:
                new[filled] = prop
                new_d[filled] = dp
                filled += 1
        if filled < P:
            break
        kern = multivariate_normal(np.zeros(theta.shape[1]), cov)
        mix = np.array([weights @ kern.pdf(p - theta).reshape(-1) for p in new])
        w = np.exp(prior.logpdf(new)) / mix
        theta, weights, dist = new, w / w.sum(), new_d
        epsilons.append(eps)
        rounds += 1
        eps *= cfg.epsilon_decay
    return SMCABCResult(theta, weights, epsilons, used, rounds)


def write_samples(path, samples, sidecar: dict | None = None) -> None:
    """Write one parameter vector per row, plus ``<path>.json`` if ``sidecar`` is given."""
    pts = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"theta{j}" for j in range(pts.shape[1])])
        for row in pts:
            w.writerow([repr(float(v)) for v in row])
    if sidecar is not None:
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(type(o))


def read_samples(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
