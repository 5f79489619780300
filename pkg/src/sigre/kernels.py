"""Kernel evaluations on observations, parameters, series and (series, parameter) pairs.

The signature kernel is computed by integrating the Goursat problem

    d^2 k / ds dt = <dx(s), dy(t)>_H  k(s, t),      k(0, .) = k(., 0) = 1

where the source term is the second mixed increment of the static-kernel
Gram surface ``kappa(x_i, y_j)``; i.e. the series are interpolated
piecewise-linearly *in feature space*.  Each original cell is split into
``2**dyadic_order`` sub-steps per axis.  On every sub-cell the source is
constant, and the default ``"series"`` scheme solves the cell exactly as a
truncated double power series; ``"fd"`` selects the classic second-order
explicit stencil instead.

A truncated-signature route (:func:`truncated_signature`,
:func:`truncated_sig_inner`) is provided as an independent oracle for the
linear static kernel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence, Union

import numba
import numpy as np

from .errors import DegenerateScale, NonFinite, TooFewPoints
from .series import CLOCKS, TimeSeries, median_pairwise_sq_dist, time_augment

__all__ = [
    "RbfConfig",
    "LinearStatic",
    "AnisoRbfConfig",
    "SignatureKernelConfig",
    "K2KernelConfig",
    "MEDIAN_HEURISTIC",
    "SignatureTensors",
    "GramMatrix",
    "rbf_eval",
    "aniso_rbf_eval",
    "truncated_signature",
    "chen_product",
    "truncated_sig_inner",
    "signature_kernel_eval",
    "mmd_sq_unbiased",
    "k2_kernel_eval",
    "product_kernel_eval",
    "gram_matrix",
    "SignatureKernel",
    "K2Kernel",
    "SummaryRbfKernel",
    "ParamKernel",
    "ProductKernel",
    "signature_kernel_for",
    "k2_kernel_for",
    "series_kernel_from_dict",
]

MEDIAN_HEURISTIC = "median"


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RbfConfig:
    """Gaussian RBF ``exp(-|a-b|^2 / scale)``."""

    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise DegenerateScale(f"RBF scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class LinearStatic:
    """Euclidean inner product as static kernel (used by the oracle tests)."""


@dataclass(frozen=True)
class AnisoRbfConfig:
    lengthscales: tuple

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if not ls or min(ls) <= 0:
            raise ValueError("lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)


@dataclass(frozen=True)
class SignatureKernelConfig:
    static: Union[RbfConfig, LinearStatic]
    dyadic_order: int = 0
    normalize: bool = False
    time_augment: bool = True
    scheme: str = "series"
    clock: str = "raw"

    def __post_init__(self):
        if not 0 <= self.dyadic_order <= 6:
            raise ValueError("dyadic_order must lie in [0, 6]")
        if self.scheme not in ("series", "fd"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.clock not in CLOCKS:
            raise ValueError(f"unknown clock {self.clock!r}")

    def to_dict(self) -> dict:
        static = {"kind": "linear"} if isinstance(self.static, LinearStatic) else {
            "kind": "rbf", "scale": self.static.scale}
        return {"kind": "signature", "static": static, "dyadic_order": self.dyadic_order,
                "normalize": self.normalize, "time_augment": self.time_augment,
                "scheme": self.scheme, "clock": self.clock}

    @classmethod
    def from_dict(cls, d: dict) -> "SignatureKernelConfig":
        st = d["static"]
        static = LinearStatic() if st["kind"] == "linear" else RbfConfig(float(st["scale"]))
        return cls(static, int(d.get("dyadic_order", 0)), bool(d.get("normalize", False)),
                   bool(d.get("time_augment", True)), d.get("scheme", "series"),
                   d.get("clock", "unit"))


@dataclass(frozen=True)
class K2KernelConfig:
    epsilon: float
    chi_bandwidth: Union[float, str] = MEDIAN_HEURISTIC

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.chi_bandwidth != MEDIAN_HEURISTIC and not float(self.chi_bandwidth) > 0:
            raise DegenerateScale("chi bandwidth must be positive")

    def resolved(self, observation: TimeSeries) -> "K2KernelConfig":
        """Replace the median-heuristic sentinel using the observed series."""
        if self.chi_bandwidth != MEDIAN_HEURISTIC:
            return self
        return replace(self, chi_bandwidth=median_pairwise_sq_dist(observation))

    def to_dict(self) -> dict:
        return {"kind": "k2", **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "K2KernelConfig":
        bw = d.get("chi_bandwidth", MEDIAN_HEURISTIC)
        return cls(float(d["epsilon"]), bw if bw == MEDIAN_HEURISTIC else float(bw))


# ---------------------------------------------------------------------------
# static and parameter kernels
# ---------------------------------------------------------------------------


def rbf_eval(a, b, cfg: RbfConfig) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.exp(-np.sum((a - b) ** 2) / cfg.scale))


def aniso_rbf_eval(t1, t2, cfg: AnisoRbfConfig) -> float:
    t1 = np.atleast_1d(np.asarray(t1, dtype=np.float64))
    t2 = np.atleast_1d(np.asarray(t2, dtype=np.float64))
    ls = np.asarray(cfg.lengthscales)
    if t1.shape != ls.shape or t2.shape != ls.shape:
        raise ValueError("parameter dimension does not match lengthscales")
    return float(np.exp(-np.sum(((t1 - t2) / ls) ** 2)))


# ---------------------------------------------------------------------------
# truncated signatures (oracle)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SignatureTensors:
    """Levels ``0..depth`` of a path signature; level ``m`` has shape ``(d,)*m``."""

    depth: int
    levels: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return self.levels[1].shape[0] if self.depth >= 1 else 0


def _segment_signature(delta: np.ndarray, depth: int) -> list:
    levels = [np.ones(())]
    for m in range(1, depth + 1):
        levels.append(np.multiply.outer(levels[-1], delta) / m)
    return levels


def chen_product(a: SignatureTensors, b: SignatureTensors) -> SignatureTensors:
    """Signature of the concatenation of two paths from their signatures."""
    depth = min(a.depth, b.depth)
    out = []
    for m in range(depth + 1):
        acc = np.zeros(a.levels[m].shape)
        for k in range(m + 1):
            acc = acc + np.multiply.outer(a.levels[k], b.levels[m - k])
        out.append(acc)
    return SignatureTensors(depth, tuple(out))


def truncated_signature(s: TimeSeries | np.ndarray, depth: int) -> SignatureTensors:
    """Exact signature up to ``depth`` of the piecewise-linear interpolant of ``s``."""
    x = s.values if isinstance(s, TimeSeries) else np.asarray(s, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if depth < 1:
        raise ValueError("depth must be >= 1")
    increments = np.diff(x, axis=0)
    sig = SignatureTensors(depth, tuple(_segment_signature(np.zeros(x.shape[1]), depth)))
    for delta in increments:
        sig = chen_product(sig, SignatureTensors(depth, tuple(_segment_signature(delta, depth))))
    return sig


def truncated_sig_inner(s1, s2, depth: int) -> float:
    """``sum_{m<=depth} <S_m(s1), S_m(s2)>`` with the coordinate-product inner product."""
    a = truncated_signature(s1, depth)
    b = truncated_signature(s2, depth)
    if a.dim != b.dim:
        raise ValueError("channel dimensions differ")
    return float(sum(np.vdot(u, v) for u, v in zip(a.levels, b.levels)))


# ---------------------------------------------------------------------------
# PDE signature kernel
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _series_degree(inc: np.ndarray, order: int) -> int:
    """Smallest truncation degree whose remainder term drops below 1e-16."""
    c = np.max(np.abs(inc)) / float(1 << (2 * order))
    term = 1.0
    for p in range(1, 41):
        term *= c / (p * p)
        if p >= 3 and term < 1e-16:
            return p
    return 40


@numba.njit(cache=True)
def _goursat(inc: np.ndarray, order: int) -> float:
    """Cell-exact solver: power series in each (sub)cell, edges carried as polynomials.

    On a cell the source ``c`` is constant, so ``u_st = c u`` with polynomial
    edge data has the closed-form coefficients ``C[p, q] = c C[p-1, q-1] / (p q)``.
    """
    n1, n2 = inc.shape
    r = 1 << order
    M = n1 * r
    N = n2 * r
    scale = 1.0 / (r * r)
    P = _series_degree(inc, order)
    inv = np.empty(P + 1)
    inv[0] = 0.0
    for p in range(1, P + 1):
        inv[p] = 1.0 / p
    bottom = np.zeros((N, P + 1))
    bottom[:, 0] = 1.0
    left = np.zeros(P + 1)
    prow = np.empty(P + 1)
    crow = np.empty(P + 1)
    colsum = np.empty(P + 1)
    for i in range(M):
        left[:] = 0.0
        left[0] = 1.0
        row = inc[i // r]
        for j in range(N):
            c = row[j // r] * scale
            edge = bottom[j]
            # row p = 0 of the coefficient table is the left edge
            for q in range(P + 1):
                prow[q] = left[q]
                colsum[q] = left[q]
            top0 = left[0]
            for q in range(1, P + 1):
                top0 += left[q]
            edge_new0 = top0
            for p in range(1, P + 1):
                cp = c * inv[p]
                crow[0] = edge[p]
                acc = crow[0]
                colsum[0] += crow[0]
                for q in range(1, P + 1):
                    v = cp * inv[q] * prow[q - 1]
                    crow[q] = v
                    acc += v
                    colsum[q] += v
                edge[p] = acc
                for q in range(P + 1):
                    prow[q] = crow[q]
            edge[0] = edge_new0
            for q in range(P + 1):
                left[q] = colsum[q]
    total = 0.0
    for p in range(P + 1):
        total += bottom[N - 1, p]
    return total


@numba.njit(cache=True)
def _goursat_fd(inc: np.ndarray, order: int) -> float:
    """Second-order explicit finite-difference stencil over the refined grid."""
    n1, n2 = inc.shape
    r = 1 << order
    M = n1 * r
    N = n2 * r
    scale = 1.0 / (r * r)
    prev = np.ones(N + 1)
    cur = np.ones(N + 1)
    for i in range(M):
        cur[0] = 1.0
        row = inc[i // r]
        for j in range(N):
            a = row[j // r] * scale
            a2 = a * a / 12.0
            cur[j + 1] = (cur[j] + prev[j + 1]) * (1.0 + 0.5 * a + a2) - prev[j] * (1.0 - a2)
        tmp = prev
        prev = cur
        cur = tmp
    return prev[N]


@numba.njit(cache=True)
def _increment_surface(x: np.ndarray, y: np.ndarray, scale: float, linear: bool) -> np.ndarray:
    n, d = x.shape
    m = y.shape[0]
    g = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            if linear:
                for c in range(d):
                    acc += x[i, c] * y[j, c]
                g[i, j] = acc
            else:
                for c in range(d):
                    diff = x[i, c] - y[j, c]
                    acc += diff * diff
                g[i, j] = math.exp(-acc / scale)
    inc = np.empty((n - 1, m - 1))
    for i in range(n - 1):
        for j in range(m - 1):
            inc[i, j] = g[i + 1, j + 1] - g[i + 1, j] - g[i, j + 1] + g[i, j]
    return inc


@numba.njit(cache=True)
def _sig_pair(x, y, scale, linear, order, fd):
    inc = _increment_surface(x, y, scale, linear)
    if fd:
        return _goursat_fd(inc, order)
    return _goursat(inc, order)


@numba.njit(cache=True)
def _sig_cross(X, Y, scale, linear, order, fd, symmetric):
    na = X.shape[0]
    nb = Y.shape[0]
    out = np.empty((na, nb))
    for a in range(na):
        start = a if symmetric else 0
        for b in range(start, nb):
            v = _sig_pair(X[a], Y[b], scale, linear, order, fd)
            out[a, b] = v
            if symmetric:
                out[b, a] = v
    return out


def _static_args(cfg: SignatureKernelConfig) -> tuple:
    fd = cfg.scheme == "fd"
    if isinstance(cfg.static, LinearStatic):
        return 1.0, True, cfg.dyadic_order, fd
    return float(cfg.static.scale), False, cfg.dyadic_order, fd


def _prepare(s: TimeSeries, cfg: SignatureKernelConfig) -> np.ndarray:
    if s.length < 2:
        raise TooFewPoints("signature kernel needs series of length >= 2")
    return (time_augment(s, cfg.clock) if cfg.time_augment else s).values


def signature_kernel_eval(s1: TimeSeries, s2: TimeSeries, cfg: SignatureKernelConfig) -> float:
    args = _static_args(cfg)
    x, y = _prepare(s1, cfg), _prepare(s2, cfg)
    if x.shape[1] != y.shape[1]:
        raise ValueError("channel dimensions differ")
    k = _sig_pair(x, y, *args)
    if cfg.normalize:
        k = k / math.sqrt(_sig_pair(x, x, *args) * _sig_pair(y, y, *args))
    if not math.isfinite(k):
        raise NonFinite("signature kernel overflowed; reduce the static scale or normalise")
    return float(k)


# ---------------------------------------------------------------------------
# MMD / K2 kernel
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _chi_sum(x, y, bw, skip_diag):
    n, d = x.shape
    m = y.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(m):
            if skip_diag and i == j:
                continue
            acc = 0.0
            for c in range(d):
                diff = x[i, c] - y[j, c]
                acc += diff * diff
            total += math.exp(-acc / bw)
    return total


@numba.njit(cache=True)
def _within(X, bw):
    out = np.empty(X.shape[0])
    n = X.shape[1]
    for a in range(X.shape[0]):
        out[a] = _chi_sum(X[a], X[a], bw, True) / (n * (n - 1))
    return out


@numba.njit(cache=True)
def _cross_mean(X, Y, bw, symmetric):
    na, nb = X.shape[0], Y.shape[0]
    out = np.empty((na, nb))
    norm = X.shape[1] * Y.shape[1]
    for a in range(na):
        start = a if symmetric else 0
        for b in range(start, nb):
            v = _chi_sum(X[a], Y[b], bw, False) / norm
            out[a, b] = v
            if symmetric:
                out[b, a] = v
    return out


def _points(s) -> np.ndarray:
    x = s.values if isinstance(s, TimeSeries) else np.asarray(s, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def mmd_sq_unbiased(s1, s2, chi_bandwidth: float) -> float:
    """Unbiased MMD^2 between the empirical point measures of two series."""
    x, y = _points(s1), _points(s2)
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise TooFewPoints("unbiased MMD needs at least 2 points per side")
    bw = float(chi_bandwidth)
    within_x = _chi_sum(x, x, bw, True) / (n * (n - 1))
    within_y = _chi_sum(y, y, bw, True) / (m * (m - 1))
    cross = _chi_sum(x, y, bw, False) / (n * m)
    return float(within_x + within_y - 2.0 * cross)


def k2_kernel_eval(s1, s2, cfg: K2KernelConfig) -> float:
    if cfg.chi_bandwidth == MEDIAN_HEURISTIC:
        raise ValueError("resolve the chi bandwidth against the observation first")
    return float(math.exp(-mmd_sq_unbiased(s1, s2, cfg.chi_bandwidth) / cfg.epsilon))


# ---------------------------------------------------------------------------
# kernel objects with batched cross-matrices
# ---------------------------------------------------------------------------


def _uniform_stack(series: Sequence[TimeSeries], prep) -> np.ndarray | None:
    arrs = [prep(s) for s in series]
    if len({a.shape for a in arrs}) == 1:
        return np.ascontiguousarray(np.stack(arrs))
    return None


class SignatureKernel:
    """Signature kernel on series, with batched Gram/cross evaluation."""

    kind = "signature"

    def __init__(self, config: SignatureKernelConfig):
        self.config = config

    def __call__(self, s1: TimeSeries, s2: TimeSeries) -> float:
        return signature_kernel_eval(s1, s2, self.config)

    def _raw_cross(self, A, B, symmetric):
        cfg = self.config
        args = _static_args(cfg)
        prep = lambda s: _prepare(s, cfg)  # noqa: E731
        XA = _uniform_stack(A, prep)
        XB = XA if symmetric else _uniform_stack(B, prep)
        if XA is not None and XB is not None:
            K = _sig_cross(XA, XB, *args, symmetric)
        else:
            K = np.empty((len(A), len(B)))
            for i, a in enumerate(A):
                for j, b in enumerate(B):
                    K[i, j] = _sig_pair(prep(a), prep(b), *args)
        if not np.all(np.isfinite(K)):
            i, j = np.argwhere(~np.isfinite(K))[0]
            raise NonFinite(f"signature kernel overflowed at ({i}, {j})")
        return K

    def diag(self, A: Sequence[TimeSeries]) -> np.ndarray:
        args = _static_args(self.config)
        return np.array([_sig_pair(x, x, *args)
                         for x in (_prepare(s, self.config) for s in A)])

    def cross(self, A: Sequence[TimeSeries], B: Sequence[TimeSeries]) -> np.ndarray:
        K = self._raw_cross(A, B, symmetric=False)
        if self.config.normalize:
            K = K / np.sqrt(np.outer(self.diag(A), self.diag(B)))
        return K

    def gram(self, A: Sequence[TimeSeries]) -> np.ndarray:
        K = self._raw_cross(A, A, symmetric=True)
        if self.config.normalize:
            d = np.sqrt(np.diag(K).copy())
            K = K / np.outer(d, d)
        return K

    def to_dict(self) -> dict:
        return self.config.to_dict()


class K2Kernel:
    """``exp(-MMD^2 / epsilon)`` on the point clouds of two series.

    :meth:`mmd_cross` exposes the epsilon-free MMD^2 matrix so callers can
    cache it and re-exponentiate for each epsilon.
    """

    kind = "k2"

    def __init__(self, config: K2KernelConfig):
        if config.chi_bandwidth == MEDIAN_HEURISTIC:
            raise ValueError("resolve the chi bandwidth against the observation first")
        self.config = config

    def __call__(self, s1, s2) -> float:
        return k2_kernel_eval(s1, s2, self.config)

    def mmd_cross(self, A, B, symmetric=False) -> np.ndarray:
        bw = float(self.config.chi_bandwidth)
        XA = _uniform_stack(A, _points)
        XB = XA if symmetric else _uniform_stack(B, _points)
        if XA is None or XB is None:
            return np.array([[mmd_sq_unbiased(a, b, bw) for b in B] for a in A])
        if XA.shape[1] < 2 or XB.shape[1] < 2:
            raise TooFewPoints("unbiased MMD needs at least 2 points per side")
        wa = _within(XA, bw)
        wb = wa if symmetric else _within(XB, bw)
        return wa[:, None] + wb[None, :] - 2.0 * _cross_mean(XA, XB, bw, symmetric)

    def from_mmd(self, mmd2: np.ndarray) -> np.ndarray:
        return np.exp(-mmd2 / self.config.epsilon)

    def cross(self, A, B) -> np.ndarray:
        return self.from_mmd(self.mmd_cross(A, B))

    def gram(self, A) -> np.ndarray:
        return self.from_mmd(self.mmd_cross(A, A, symmetric=True))

    def with_epsilon(self, epsilon: float) -> "K2Kernel":
        return K2Kernel(replace(self.config, epsilon=float(epsilon)))

    def to_dict(self) -> dict:
        return self.config.to_dict()


class SummaryRbfKernel:
    """RBF kernel on standardised summary-statistic vectors (baseline only)."""

    kind = "bespoke-rbf"

    def __init__(self, summarize: Callable[[TimeSeries], np.ndarray], scale: float,
                 center: np.ndarray, spread: np.ndarray, model_kind: str = ""):
        self.summarize = summarize
        self.scale = float(scale)
        self.center = np.asarray(center, dtype=np.float64)
        self.spread = np.asarray(spread, dtype=np.float64)
        self.model_kind = model_kind

    def features(self, A) -> np.ndarray:
        S = np.array([self.summarize(s) for s in A])
        return (S - self.center) / self.spread

    def sqdist_cross(self, A, B) -> np.ndarray:
        fa, fb = self.features(A), self.features(B)
        return np.maximum(((fa[:, None, :] - fb[None, :, :]) ** 2).sum(-1), 0.0)

    def from_sqdist(self, d2):
        return np.exp(-d2 / self.scale)

    def with_scale(self, scale: float) -> "SummaryRbfKernel":
        return SummaryRbfKernel(self.summarize, scale, self.center, self.spread, self.model_kind)

    def __call__(self, s1, s2) -> float:
        return float(self.cross([s1], [s2])[0, 0])

    def cross(self, A, B):
        return self.from_sqdist(self.sqdist_cross(A, B))

    def gram(self, A):
        return self.cross(A, A)

    def to_dict(self) -> dict:
        return {"kind": "bespoke-rbf", "scale": self.scale, "center": self.center.tolist(),
                "spread": self.spread.tolist(), "model_kind": self.model_kind}


class ParamKernel:
    """Anisotropic Gaussian RBF on parameter vectors."""

    def __init__(self, config: AnisoRbfConfig):
        self.config = config
        self._ls = np.asarray(config.lengthscales)

    def __call__(self, t1, t2) -> float:
        return aniso_rbf_eval(t1, t2, self.config)

    def cross(self, TA, TB) -> np.ndarray:
        TA = np.atleast_2d(np.asarray(TA, dtype=np.float64)) / self._ls
        TB = np.atleast_2d(np.asarray(TB, dtype=np.float64)) / self._ls
        d2 = (TA * TA).sum(1)[:, None] + (TB * TB).sum(1)[None, :] - 2.0 * TA @ TB.T
        return np.exp(-np.maximum(d2, 0.0))

    def gram(self, TA) -> np.ndarray:
        return self.cross(TA, TA)

    def to_dict(self) -> dict:
        return {"lengthscales": list(self.config.lengthscales)}


class ProductKernel:
    """``m((x, th), (x', th')) = k(x, x') * l(th, th')``."""

    def __init__(self, series_kernel, param_kernel: ParamKernel):
        self.series_kernel = series_kernel
        self.param_kernel = param_kernel

    def __call__(self, p1, p2) -> float:
        return self.series_kernel(p1[0], p2[0]) * self.param_kernel(p1[1], p2[1])

    def cross(self, A, B) -> np.ndarray:
        xa, ta = zip(*A)
        xb, tb = zip(*B)
        return self.series_kernel.cross(xa, xb) * self.param_kernel.cross(np.array(ta), np.array(tb))

    def gram(self, A) -> np.ndarray:
        xa, ta = zip(*A)
        return self.series_kernel.gram(xa) * self.param_kernel.gram(np.array(ta))


def product_kernel_eval(p1, p2, series_kernel, param_kernel) -> float:
    return float(series_kernel(p1[0], p2[0]) * param_kernel(p1[1], p2[1]))


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    kind: str = ""

    def to_csv(self, path) -> None:
        np.savetxt(path, self.entries, delimiter=",", fmt="%.17g")


def gram_matrix(points: Sequence, kernel) -> GramMatrix:
    """Gram matrix of ``kernel`` over ``points``.

    Kernels exposing a batched ``gram`` method use it; otherwise the upper
    triangle is evaluated pairwise and mirrored.
    """
    n = len(points)
    if n == 0:
        raise ValueError("need at least one point")
    if hasattr(kernel, "gram"):
        K = np.asarray(kernel.gram(points), dtype=np.float64)
    else:
        K = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                K[i, j] = K[j, i] = kernel(points[i], points[j])
    bad = np.argwhere(~np.isfinite(K))
    if bad.size:
        i, j = bad[0]
        raise NonFinite(f"non-finite Gram entry at ({i}, {j})")
    kind = getattr(kernel, "kind", type(kernel).__name__)
    return GramMatrix(K, kind)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------


def signature_kernel_for(observation: TimeSeries, dyadic_order: int = 0, normalize: bool = False,
                         time_augment_: bool = True, scheme: str = "series",
                         clock: str = "raw") -> SignatureKernel:
    """Signature kernel whose RBF static scale is the median heuristic on ``observation``.

    The heuristic runs on the same (optionally time-augmented) channels the
    static kernel sees. With the default raw clock the time channel keeps
    the series' own units, so the scale also sets how far apart in time two
    observations can be and still look alike.
    """
    obs = time_augment(observation, clock) if time_augment_ else observation
    cfg = SignatureKernelConfig(RbfConfig(median_pairwise_sq_dist(obs)), dyadic_order, normalize,
                                time_augment_, scheme, clock)
    return SignatureKernel(cfg)


def k2_kernel_for(observation: TimeSeries, epsilon: float = 1.0) -> K2Kernel:
    return K2Kernel(K2KernelConfig(epsilon).resolved(observation))


def series_kernel_from_dict(d: dict):
    if d["kind"] == "signature":
        return SignatureKernel(SignatureKernelConfig.from_dict(d))
    if d["kind"] == "k2":
        return K2Kernel(K2KernelConfig.from_dict(d))
    if d["kind"] == "bespoke-rbf":
        from .simulators import bespoke_summaries
        kind = d["model_kind"]
        return SummaryRbfKernel(lambda s: bespoke_summaries(s, kind), d["scale"],
                                np.array(d["center"]), np.array(d["spread"]), kind)
    raise ValueError(f"unknown series kernel kind {d['kind']!r}")
