"""Epidemic inference without a likelihood.

Draws a GSE pseudo-observation, trains K2 and signature ratio estimators
with five negatives per positive, and samples each posterior by
importance resampling of prior draws. A short SMC-ABC run provides a
reference for comparison.

Takes about a minute on one core.
"""

import numpy as np

from sigre.metrics import wasserstein
from sigre.ratio import SeriesGram, TuneSpace, fit_ratio_estimator, make_series_kernel, tune
from sigre.samplers import SIRConfig, SMCABCConfig, sir_resample, smc_abc
from sigre.simulators import get_model, simulate_dataset

model = get_model("gse")
x_obs = model.observe(0)
X, Y = x_obs.values.T
print(f"observed epidemic: {int(X[0] - X[-1])} infections, peak {int(Y.max())} infected")

reference = smc_abc(model.simulate, x_obs, model.prior,
                    SMCABCConfig(population=200, budget=20_000), rng=0).resample(1000, 1)
print(f"SMC-ABC reference mean {reference.mean(0).round(4)} (truth {model.theta_star})")

budget, K = 100, 5.0
data = simulate_dataset(model, budget, seed=2)
sir = SIRConfig()
for method in ("signature", "k2"):
    gram = SeriesGram(make_series_kernel(method, x_obs, data, "gse"), data.series)
    best = tune(TuneSpace(trials=10), data, gram, rng=3, K=K)
    est = fit_ratio_estimator(data, gram, lengthscales=best.lengthscales, omega=best.omega,
                              epsilon=best.epsilon, K=K, q=int(budget * (K + 1)), rng=4)
    draws = model.prior.sample(np.random.default_rng(5), sir.prior_draws)
    post = sir_resample(draws, est.log_ratio_fn(x_obs)(draws), sir, rng=6)
    print(f"{method:>9}: posterior mean {post.mean(0).round(4)}, W1 to reference "
          f"{wasserstein(post, reference):.4f}")
