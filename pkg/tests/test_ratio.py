import json
import math

import numpy as np
import pytest
from scipy.special import expit

from conftest import toy_dataset, toy_exact_log_ratio, toy_simulate
from sigre.kernels import AnisoRbfConfig, ParamKernel, signature_kernel_for
from sigre.ratio import (
    LogisticModel,
    RatioEstimator,
    SeriesGram,
    TuneSpace,
    build_training_set,
    cv_log_loss,
    decision,
    fit_logistic,
    fit_ratio_estimator,
    log_ratio,
    logistic_objective,
    make_series_kernel,
    tune,
    unnormalized_posterior,
)
from sigre.series import Dataset, TimeSeries
from sigre.simulators import UniformBox, get_model, simulate_dataset


class TestTrainingSet:
    def test_balanced(self, rng):
        ts = build_training_set(4, 1.0, rng)
        assert ts.n_positive == 4 and len(ts) == 8
        neg = ts.labels == 0
        assert np.all(ts.x_index[neg] != ts.theta_index[neg])
        np.testing.assert_array_equal(ts.x_index[:4], ts.theta_index[:4])

    def test_many_negatives_repeat_series(self, rng):
        ts = build_training_set(4, 5.0, rng)
        neg = ts.labels == 0
        assert neg.sum() == 20
        assert np.bincount(ts.x_index[neg]).max() >= 2
        assert np.all(ts.x_index[neg] != ts.theta_index[neg])
        # each full pass uses every series once
        np.testing.assert_array_equal(np.bincount(ts.x_index[neg]), [5, 5, 5, 5])

    def test_fractional_k(self, rng):
        ts = build_training_set(10, 0.25, rng)
        assert (ts.labels == 0).sum() == round(2.5)

    def test_deterministic(self):
        a = build_training_set(30, 2.0, np.random.default_rng(5))
        b = build_training_set(30, 2.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a.x_index, b.x_index)
        np.testing.assert_array_equal(a.theta_index, b.theta_index)

    def test_too_small(self, rng):
        with pytest.raises(ValueError):
            build_training_set(1, 1.0, rng)

    def test_members_stay_inside(self, rng):
        members = np.array([2, 5, 7, 11])
        ts = build_training_set(20, 3.0, rng, members=members)
        assert set(ts.x_index) <= set(members) and set(ts.theta_index) <= set(members)

    def test_pairs(self, rng):
        data = Dataset([TimeSeries([float(i), 1.0]) for i in range(3)], [[0.0], [1.0], [2.0]])
        ts = build_training_set(data, 1.0, rng)
        pairs = ts.pairs(data)
        assert pairs[0][0] is data.series[0] and pairs[0][1][0] == 0.0


class TestLogistic:
    def test_zero_features(self):
        m = fit_logistic(np.zeros((6, 3)), [0, 1, 0, 1, 0, 1], 1.0)
        np.testing.assert_allclose(m.weights, 0, atol=1e-12)
        assert abs(m.intercept) < 1e-8
        np.testing.assert_allclose(expit(m.logit(np.zeros((1, 3)))), 0.5)

    def test_separable_regularized(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        z = np.array([0, 0, 1, 1])
        loose, tight = fit_logistic(X, z, 1.0), fit_logistic(X, z, 1e4)
        assert np.all(np.isfinite(loose.weights))

        def loss(m):
            f = m.logit(X)
            return np.sum(np.logaddexp(0, f) - z * f)

        assert loss(loose) < loss(tight)

    def test_gradient(self, rng):
        X = rng.normal(size=(30, 5))
        z = rng.integers(0, 2, 30).astype(float)
        h = 1e-6
        for _ in range(10):
            p = rng.normal(size=6)
            _, g = logistic_objective(p, X, z, 0.3)
            fd = np.array([(logistic_objective(p + h * e, X, z, 0.3)[0] - logistic_objective(p - h * e, X, z, 0.3)[0]) / (2 * h)
                           for e in np.eye(6)])
            assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-5

    def test_flipped_labels_negate(self, rng):
        X = rng.normal(size=(40, 3))
        z = (X[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(float)
        a, b = fit_logistic(X, z, 1.0), fit_logistic(X, 1 - z, 1.0)
        np.testing.assert_allclose(a.weights, -b.weights, atol=1e-4)
        np.testing.assert_allclose(expit(a.logit(X)) + expit(b.logit(X)), 1.0, atol=1e-4)

    def test_non_finite(self):
        with pytest.raises(Exception):
            fit_logistic(np.array([[np.inf], [0.0]]), [0, 1], 1.0)

    def test_iteration_cap(self, rng):
        X = rng.normal(size=(50, 40))
        m = fit_logistic(X, rng.integers(0, 2, 50), 1e-5)
        assert m.iterations <= 500

    def test_fit_term_non_decreasing_in_omega(self, rng):
        # the unpenalised training loss of the optimum can only grow with omega
        X = rng.normal(size=(200, 4))
        z = (X @ [1.0, -1.0, 0.5, 0.0] + rng.normal(size=200) > 0).astype(float)
        losses, accs = [], []
        for omega in [1e-3, 1e-1, 1e1, 1e3, 1e5]:
            m = fit_logistic(X, z, omega)
            f = m.logit(X)
            losses.append(np.sum(np.logaddexp(0, f) - z * f))
            accs.append(np.mean((f > 0) == z))
        assert np.all(np.diff(losses) >= -1e-6)
        assert accs[0] > accs[-1]


def flat_estimator(prior=None):
    """Estimator with zero weights over two landmarks."""
    series = (TimeSeries([0.0, 1.0]), TimeSeries([1.0, 0.0]))
    kernel = signature_kernel_for(TimeSeries([0.0, 1.0, 3.0]))
    return RatioEstimator(kernel, ParamKernel(AnisoRbfConfig((1.0,))), series, np.array([[0.0], [1.0]]),
                          np.eye(2), LogisticModel(np.zeros(2), 0.0, 1.0), prior)


class TestEstimatorIdentities:
    def test_flat_decision(self):
        est = flat_estimator()
        x = TimeSeries([0.3, 0.2, 0.9])
        assert decision(est, x, [0.4]) == 0.5
        assert log_ratio(est, x, [0.4]) == 0.0

    def test_flat_posterior_is_prior(self):
        prior = UniformBox((-1.0,), (1.0,))
        est = flat_estimator(prior)
        x = TimeSeries([0.3, 0.2, 0.9])
        vals = unnormalized_posterior(est, x, np.array([[-0.5], [0.2], [3.0]]))
        np.testing.assert_allclose(vals, [0.5, 0.5, 0.0])

    def test_calibration_identities(self, rng):
        est = flat_estimator(UniformBox((-2.0,), (2.0,)))
        est = RatioEstimator(est.series_kernel, est.param_kernel, est.landmark_series, est.landmark_thetas,
                             est.projection, LogisticModel(np.array([1.3, -0.7]), 0.2, 1.0), est.prior)
        x = TimeSeries([0.3, 0.2, 0.9])
        th = rng.uniform(-1.5, 1.5, size=(5, 1))
        lr, d = log_ratio(est, x, th), decision(est, x, th)
        np.testing.assert_array_equal(expit(lr), d)
        np.testing.assert_allclose(np.exp(lr) * (1 - d), d, rtol=1e-12)
        assert np.all((d > 0) & (d < 1))
        post = unnormalized_posterior(est, x, th)
        np.testing.assert_allclose(post[0] / post[1], np.exp(lr[0] - lr[1]), rtol=1e-12)

    def test_pairs_match_single(self, rng):
        est = flat_estimator()
        est = RatioEstimator(est.series_kernel, est.param_kernel, est.landmark_series, est.landmark_thetas,
                             est.projection, LogisticModel(np.array([1.3, -0.7]), 0.2, 1.0))
        xs = [TimeSeries(rng.normal(size=4)) for _ in range(3)]
        th = rng.normal(size=(3, 1))
        np.testing.assert_allclose(est.log_ratio_pairs(xs, th), [log_ratio(est, x, t) for x, t in zip(xs, th)],
                                   rtol=1e-12)


@pytest.fixture(scope="module")
def ou_setup():
    model = get_model("ou")
    data = simulate_dataset(model, 60, 4)
    x_obs = model.observe(0)
    return model, data, x_obs


class TestTune:
    def test_single_trial(self, ou_setup):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)
        res = tune(TuneSpace(trials=1), data, gram, 3)
        assert len(res.history) == 1
        assert res.lengthscales == res.history[0]["lengthscales"]
        lo, hi = TuneSpace().lengthscale_bounds
        assert all(lo <= v <= hi for v in res.lengthscales)

    def test_deterministic(self, ou_setup):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("k2", x_obs), data.series)
        a = tune(TuneSpace(trials=4), data, gram, 9)
        b = tune(TuneSpace(trials=4), data, gram, 9)
        assert a == b and a.epsilon is not None

    def test_random_search_deterministic(self, ou_setup):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("k2", x_obs), data.series)
        space = TuneSpace(trials=4, search="random")
        a, b = tune(space, data, gram, 9), tune(space, data, gram, 9)
        assert a == b and len(a.history) == 4

    @pytest.mark.parametrize("search", ["tpe", "random"])
    def test_trials_respect_priors(self, ou_setup, search):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("k2", x_obs), data.series)
        space = TuneSpace(trials=12, search=search)
        res = tune(space, data, gram, 4)
        assert len(res.history) == 12
        for h in res.history:
            assert all(1e-3 <= v <= 1e3 for v in h["lengthscales"])
            assert 1e-5 <= h["omega"] <= 1e4 and 1e-3 <= h["epsilon"] <= 1e3
        assert res.cv_loss == min(h["loss"] for h in res.history)

    def test_tpe_beats_random_on_average(self, ou_setup):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)
        tpe = [tune(TuneSpace(trials=40), data, gram, s).cv_loss for s in range(3)]
        rnd = [tune(TuneSpace(trials=40, search="random"), data, gram, s).cv_loss for s in range(3)]
        assert np.mean(tpe) <= np.mean(rnd)

    @pytest.mark.parametrize("K", [1.0, 3.0])
    def test_cv_loss_matches_explicit_pairs(self, ou_setup, K):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)
        Kx = gram.matrix(None)
        rng = np.random.default_rng(0)
        held = np.arange(12)
        train = build_training_set(len(data), K, rng, members=np.arange(12, len(data)))
        landmarks = np.arange(len(train))
        ls, omega = (0.7, 1.3), 0.5
        got = cv_log_loss(gram, data.thetas, [(train, landmarks, held)], Kx, ls, omega, K)

        from sigre.ratio import _fit_on

        pk, projection, model, _ = _fit_on(train, landmarks, Kx, data.thetas, ls, omega)
        lx, lt = train.x_index[landmarks], train.theta_index[landmarks]
        pos, neg = [], []
        for i in held:
            for j in held:
                kc = Kx[i, lx] * pk.cross(data.thetas[j:j + 1], data.thetas[lt])[0]
                z = float(model.logit(kc @ projection.T))
                if i == j:
                    pos.append(np.logaddexp(0.0, -z))
                else:
                    neg.append(np.logaddexp(0.0, z))
        want = (np.mean(pos) + K * np.mean(neg)) / (1.0 + K)
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_all_trials_failing(self, ou_setup, monkeypatch):
        import sigre.ratio as ratio

        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)

        def broken(*args, **kwargs):
            raise ValueError("no fit")

        monkeypatch.setattr(ratio, "cv_log_loss", broken)
        res = tune(TuneSpace(trials=3), data, gram, 0)
        assert res.cv_loss == math.inf and res.history[0]["lengthscales"] == res.lengthscales

    def test_bad_space(self):
        with pytest.raises(ValueError):
            TuneSpace(omega_bounds=(1.0, 0.5))
        with pytest.raises(ValueError):
            TuneSpace(trials=0)
        with pytest.raises(ValueError):
            TuneSpace(search="grid")

    def test_learnable_labels_beat_chance(self, ou_setup):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)
        assert tune(TuneSpace(trials=8), data, gram, 1).cv_loss <= math.log(2) + 0.05

    def test_chance_level_when_independent(self):
        r = np.random.default_rng(2)
        series = tuple(TimeSeries(np.cumsum(r.standard_normal(8))) for _ in range(120))
        data = Dataset(series, r.uniform(-1, 1, size=(120, 1)))
        gram = SeriesGram(signature_kernel_for(series[0]), data.series)
        res = tune(TuneSpace(trials=10), data, gram, 0)
        assert abs(res.cv_loss - math.log(2)) <= 0.05

    def test_fold_hygiene(self):
        from sigre.ratio import _folds

        rng = np.random.default_rng(0)
        n = 30
        for held in _folds(n, 5, rng):
            train = build_training_set(n, 2.0, rng, members=np.setdiff1d(np.arange(n), held))
            assert not set(held) & (set(train.x_index) | set(train.theta_index))


class TestEstimatorFit:
    def test_json_round_trip(self, ou_setup, tmp_path):
        model, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)
        est = fit_ratio_estimator(data, gram, lengthscales=(0.3, 1.0), omega=1.0, q=50, rng=0, prior=model.prior)
        assert est.projection.shape[1] == 50 == len(est.landmark_series)
        assert est.projection.shape[0] == est.model.weights.size
        blob = json.loads(json.dumps(est.to_json()))
        back = RatioEstimator.from_json(blob)
        th = model.prior.sample(np.random.default_rng(1), 7)
        np.testing.assert_allclose(back.log_ratio_fn(x_obs)(th), est.log_ratio_fn(x_obs)(th), rtol=1e-12)
        assert back.prior.to_dict() == model.prior.to_dict()

    @pytest.mark.parametrize("method", ["k2", "bespoke-rbf"])
    def test_other_methods_round_trip(self, ou_setup, method):
        model, data, x_obs = ou_setup
        kernel = make_series_kernel(method, x_obs, data, "ou")
        gram = SeriesGram(kernel, data.series)
        est = fit_ratio_estimator(data, gram, lengthscales=(0.3, 1.0), omega=1.0, epsilon=0.5, rng=0)
        back = RatioEstimator.from_json(json.loads(json.dumps(est.to_json())))
        th = np.array([[0.5, 1.0], [0.2, -1.0]])
        np.testing.assert_allclose(back.log_ratio_fn(x_obs)(th), est.log_ratio_fn(x_obs)(th), rtol=1e-10)

    def test_all_pairs_when_q_large(self, ou_setup):
        _, data, x_obs = ou_setup
        gram = SeriesGram(make_series_kernel("signature", x_obs), data.series)
        est = fit_ratio_estimator(data, gram, lengthscales=(0.3, 1.0), omega=1.0, K=1.0, q=10_000, rng=0)
        assert len(est.landmark_series) == 120

    def test_marginal_consistency_gaussian_toy(self):
        data = toy_dataset(400, 11)
        gram = SeriesGram(signature_kernel_for(toy_simulate(0.0, np.random.default_rng(0))), data.series)
        best = tune(TuneSpace(trials=10), data, gram, 1, q=300)
        est = fit_ratio_estimator(data, gram, lengthscales=best.lengthscales, omega=best.omega, q=300, rng=2)
        r = np.random.default_rng(99)
        xs = [toy_simulate(t, r) for t in r.uniform(-2, 2, 2000)]
        th = r.uniform(-2, 2, size=(2000, 1))
        assert 0.7 <= np.mean(np.exp(est.log_ratio_pairs(xs, th))) <= 1.3

    def test_exact_ratio_oracle_is_normalized(self):
        # E_prior[r(x, theta)] = 1 for the analytic toy ratio
        th = np.linspace(-2, 2, 10_001)
        np.testing.assert_allclose(np.mean(np.exp(toy_exact_log_ratio(0.7, th))), 1.0, rtol=1e-6)
