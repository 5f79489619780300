import numpy as np
import pytest

from conftest import brownian_path
from sigre.errors import RankCollapse
from sigre.kernels import AnisoRbfConfig, ParamKernel, ProductKernel, RbfConfig, SignatureKernel, SignatureKernelConfig
from sigre import nystroem as nys


def rbf_points(rng, n, d=2, scale=1.0):
    X = rng.normal(size=(n, d))
    K = np.exp(-((X[:, None] - X[None]) ** 2).sum(-1) / scale)
    return X, K


class TestFitFromGram:
    def test_identity_gram(self):
        P, lam = nys.fit_from_gram(np.eye(2), jitter=0.0)
        feats = np.abs(P @ np.eye(2))
        np.testing.assert_allclose(np.sort(feats, axis=0), [[0, 0], [1, 1]], atol=1e-15)
        np.testing.assert_allclose(lam, [1, 1])

    def test_full_rank_exactness(self, rng):
        _, K = rbf_points(rng, 20)
        P, _ = nys.fit_from_gram(K, jitter=0.0)
        F = K @ P.T
        assert np.linalg.norm(F @ F.T - K) <= 1e-8

    def test_rank_deficient_without_jitter(self):
        K = np.ones((2, 2))
        P, lam = nys.fit_from_gram(K, jitter=0.0)
        assert lam.size == 1 and P.shape == (1, 2)

    def test_rank_collapse(self):
        with pytest.raises(RankCollapse):
            nys.fit_from_gram(np.zeros((3, 3)), jitter=0.0)

    def test_negative_jitter(self):
        with pytest.raises(ValueError):
            nys.fit_from_gram(np.eye(2), jitter=-1.0)

    def test_projection_orthonormal_in_gram_metric(self, rng):
        _, K = rbf_points(rng, 15)
        P, _ = nys.fit_from_gram(K)
        np.testing.assert_allclose(P @ K @ P.T, np.eye(P.shape[0]), atol=1e-6)

    def test_deterministic(self, rng):
        _, K = rbf_points(rng, 12)
        a, _ = nys.fit_from_gram(K)
        b, _ = nys.fit_from_gram(K.copy())
        np.testing.assert_array_equal(a, b)

    def test_monotone_truncation(self, rng):
        _, K = rbf_points(rng, 25, scale=4.0)
        P, _ = nys.fit_from_gram(K, jitter=0.0)
        errs = []
        for r in range(1, P.shape[0] + 1):
            F = K @ P[:r].T
            errs.append(np.linalg.norm(F @ F.T - K))
        assert np.all(np.diff(errs) <= 1e-10)


class TestMap:
    def make(self, rng, n=10):
        k = ProductKernel(SignatureKernel(SignatureKernelConfig(RbfConfig(0.5))), ParamKernel(AnisoRbfConfig((0.7,))))
        pts = [(brownian_path(rng, 5, 1), rng.normal(size=1)) for _ in range(n)]
        return k, pts

    def test_landmark_consistency(self, rng):
        k, pts = self.make(rng)
        m = nys.fit(pts, k)
        K = k.gram(pts)
        np.testing.assert_allclose(nys.transform(m, pts[3]), m.features_from_kernel(K[3]), rtol=1e-10)

    def test_held_out_error_bounded_by_discarded_mass(self, rng):
        X, _ = rbf_points(rng, 40)
        k = ParamKernel(AnisoRbfConfig((1.0, 1.0)))
        land, held = X[:20], X[20:]
        m = nys.fit(list(land), k, jitter=0.0)
        F = nys.transform_many(m, list(held))
        approx = F @ F.T
        exact = k.gram(held)
        # residual kernel K - K_nm K_mm^-1 K_mn is PSD, so the diagonal error bounds every entry
        resid = np.diag(exact) - np.diag(approx)
        assert np.all(resid >= -1e-8)
        bound = np.sqrt(np.outer(resid.clip(0), resid.clip(0)))
        assert np.all(np.abs(exact - approx) <= bound + 1e-8)

    def test_zero_column(self):
        k = ParamKernel(AnisoRbfConfig((0.1,)))
        m = nys.fit([np.array([0.0]), np.array([1.0])], k)
        np.testing.assert_array_equal(nys.transform(m, np.array([1e6])), np.zeros(m.retained))

    def test_q_bounds(self, rng):
        k, pts = self.make(rng, 3)
        with pytest.raises(ValueError):
            nys.fit(pts, k, q=4)
        assert nys.fit(pts, k, q=2).q == 2

    def test_json(self, rng):
        k, pts = self.make(rng, 4)
        blob = nys.fit(pts, k).to_json()
        assert set(blob) == {"landmark_index", "projection", "eigenvalues"}
