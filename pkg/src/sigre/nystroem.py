"""Nystroem low-rank feature maps for the product kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankCollapse

__all__ = ["NystroemMap", "fit", "fit_from_gram", "transform", "EIGEN_FLOOR"]

EIGEN_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class NystroemMap:
    """Landmark set and projection ``D^{-1/2} U^T`` over the retained components.

    ``projection`` has shape ``(retained, q)``; features of a point ``v`` are
    ``projection @ [m(v, v_1), ..., m(v, v_q)]``.
    """

    landmarks: list
    projection: np.ndarray
    eigenvalues: np.ndarray
    kernel: object = None
    landmark_index: np.ndarray | None = None

    @property
    def q(self) -> int:
        return self.projection.shape[1]

    @property
    def retained(self) -> int:
        return self.projection.shape[0]

    def features_from_kernel(self, kcols: np.ndarray) -> np.ndarray:
        """Features for rows of a precomputed ``(n, q)`` landmark-kernel matrix."""
        return np.asarray(kcols) @ self.projection.T

    def to_json(self) -> dict:
        return {
            "landmark_index": None if self.landmark_index is None else self.landmark_index.tolist(),
            "projection": self.projection.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


def fit_from_gram(K: np.ndarray, jitter: float | None = None):
    """Eigen-decompose a landmark Gram matrix.

    Returns ``(projection, eigenvalues)`` with components sorted by
    descending eigenvalue (ties keep the lower original index) and every
    eigenvalue at or below ``EIGEN_FLOOR * max`` discarded.

    ``jitter`` defaults to ``1e-8 * mean(diag(K))``.
    """
    K = np.asarray(K, dtype=np.float64)
    K = 0.5 * (K + K.T)
    if jitter is None:
        jitter = 1e-8 * float(np.mean(np.diag(K)))
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    lam, U = np.linalg.eigh(K + jitter * np.eye(K.shape[0]))
    order = np.argsort(-lam, kind="stable")
    lam, U = lam[order], U[:, order]
    top = lam[0] if lam.size else 0.0
    keep = lam > EIGEN_FLOOR * max(top, 0.0)
    if top <= 0 or not np.any(keep):
        raise RankCollapse("no eigenvalue of the landmark Gram exceeds the floor")
    lam, U = lam[keep], U[:, keep]
    # fix the sign of each eigenvector so the map is reproducible
    pivot = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivot, np.arange(U.shape[1])])
    return (U / np.sqrt(lam)).T, lam


def fit(landmarks, kernel, q: int | None = None, jitter: float | None = None) -> NystroemMap:
    """Fit a Nystroem map on the first ``q`` of ``landmarks`` under ``kernel``."""
    landmarks = list(landmarks)
    if q is None:
        q = len(landmarks)
    if q > len(landmarks) or q < 1:
        raise ValueError(f"q={q} must lie in [1, {len(landmarks)}]")
    landmarks = landmarks[:q]
    K = kernel.gram(landmarks) if hasattr(kernel, "gram") else np.array(
        [[kernel(a, b) for b in landmarks] for a in landmarks])
    projection, lam = fit_from_gram(K, jitter)
    return NystroemMap(landmarks, projection, lam, kernel)


def transform(nmap: NystroemMap, v) -> np.ndarray:
    """Feature vector of a single point ``v``."""
    return transform_many(nmap, [v])[0]


def transform_many(nmap: NystroemMap, points) -> np.ndarray:
    kern = nmap.kernel
    if hasattr(kern, "cross"):
        kcols = kern.cross(list(points), nmap.landmarks)
    else:
        kcols = np.array([[kern(v, lm) for lm in nmap.landmarks] for v in points])
    return nmap.features_from_kernel(kcols)
