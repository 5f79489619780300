import numpy as np
import pytest

from sigre.series import TimeSeries


def brownian_path(rng, steps: int, channels: int) -> TimeSeries:
    """Brownian motion on [0, 1] sampled at ``steps + 1`` points."""
    inc = rng.normal(0.0, np.sqrt(1.0 / steps), size=(steps, channels))
    return TimeSeries(np.vstack([np.zeros((1, channels)), np.cumsum(inc, axis=0)]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Gaussian toy: theta ~ U(-2, 2), x_t = theta + W_t with W a unit-step Gaussian
# random walk whose first step is already random. Only x_1 carries information
# about theta, so p(x | theta) / p(x) = N(x_1; theta, 1) / E_prior[N(x_1; theta', 1)].
TOY_LENGTH = 10
TOY_BOUNDS = (-2.0, 2.0)


def toy_simulate(theta: float, rng) -> TimeSeries:
    return TimeSeries(theta + np.cumsum(rng.standard_normal(TOY_LENGTH)))


def toy_dataset(n: int, seed: int):
    from sigre.series import Dataset

    rng = np.random.default_rng(seed)
    thetas = rng.uniform(*TOY_BOUNDS, size=n)
    return Dataset(tuple(toy_simulate(t, rng) for t in thetas), thetas[:, None], seed)


def toy_exact_log_ratio(x1: float, thetas, nodes: int = 10_000) -> np.ndarray:
    from scipy.special import logsumexp
    from scipy.stats import norm

    grid = np.linspace(*TOY_BOUNDS, nodes)
    log_evidence = logsumexp(norm.logpdf(x1, grid, 1.0)) - np.log(nodes)
    return norm.logpdf(x1, np.asarray(thetas, dtype=np.float64), 1.0) - log_evidence
