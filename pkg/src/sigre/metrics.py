"""Posterior-quality metrics: Wasserstein distance, mean distance, bootstrap CIs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .errors import TooFewValues

__all__ = ["SampleSet", "wasserstein", "mean_distance", "bootstrap_ci", "MAX_POINTS"]

MAX_POINTS = 1000


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray
    tag: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0 or not np.all(np.isfinite(pts)):
            raise ValueError("sample set must be nonempty and finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _points(a) -> np.ndarray:
    return a.points if isinstance(a, SampleSet) else SampleSet(a).points


def _cap(pts: np.ndarray, cap: int, rng) -> np.ndarray:
    if pts.shape[0] <= cap:
        return pts
    return pts[np.sort(rng.choice(pts.shape[0], size=cap, replace=False))]


def wasserstein(a, b, p: int = 1, cap: int = MAX_POINTS, rng=0) -> float:
    """Exact order-``p`` Wasserstein distance between two empirical measures.

    When ``lcm(|a|, |b|) <= 2 * cap`` both sets are replicated to that size
    and solved as an assignment problem; otherwise as a sparse
    transportation linear program. Sets larger than ``cap`` are subsampled
    with ``rng``.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    A, B = _points(a), _points(b)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    rng = np.random.default_rng(rng)
    A, B = _cap(A, cap, rng), _cap(B, cap, rng)
    n, m = A.shape[0], B.shape[0]
    L = math.lcm(n, m)
    if L <= 2 * cap:
        # uniform measures: replicating to a common size keeps the problem exact
        C = cdist(np.repeat(A, L // n, axis=0), np.repeat(B, L // m, axis=0)) ** p
        r, c = linear_sum_assignment(C)
        cost = C[r, c].sum() / L
    else:
        C = cdist(A, B) ** p
        # rows sum to 1/n, columns to 1/m; one constraint is redundant
        eye_n, eye_m = sparse.identity(n, format="csr"), sparse.identity(m, format="csr")
        A_eq = sparse.vstack([sparse.kron(eye_n, np.ones((1, m))),
                              sparse.kron(np.ones((1, n)), eye_m)], format="csr")
        b_eq = np.r_[np.full(n, 1.0 / n), np.full(m, 1.0 / m)]
        res = linprog(C.ravel(), A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
        if not res.success:
            raise RuntimeError(f"transport problem failed: {res.message}")
        cost = res.fun
    return float(max(cost, 0.0) ** (1.0 / p))


def mean_distance(a, b) -> float:
    """Euclidean distance between the two sample means."""
    A, B = _points(a), _points(b)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return float(np.linalg.norm(A.mean(axis=0) - B.mean(axis=0)))


def bootstrap_ci(values, level: float = 0.95, replicates: int = 10_000, rng=0):
    """Percentile bootstrap interval for the mean; returns ``(low, mean, high)``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise TooFewValues("bootstrap needs at least 2 values")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    mean = float(v.mean())
    boots = v[rng.integers(0, v.size, size=(replicates, v.size))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(boots, [alpha, 1.0 - alpha])
    return float(min(lo, mean)), mean, float(max(hi, mean))
