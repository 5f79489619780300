"""Time-series containers, time augmentation and the median heuristic."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateScale

__all__ = [
    "TimeSeries",
    "Dataset",
    "time_augment",
    "median_pairwise_sq_dist",
    "stack_values",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """An ordered sequence of ``n`` observations in ``d`` channels.

    Parameters
    ----------
    values : array_like, shape (n, d) or (n,)
        Observations; a 1-D input is read as a single channel.
    times : array_like, shape (n,), optional
        Strictly increasing timestamps. Defaults to ``0, 1, ..., n-1``.
    """

    values: np.ndarray
    times: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError(f"values must be (n, d), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        n = values.shape[0]
        if self.times is None:
            times = np.arange(n, dtype=np.float64)
        else:
            times = np.asarray(self.times, dtype=np.float64).ravel()
        if times.shape != (n,):
            raise ValueError(f"times has length {times.size}, expected {n}")
        if n > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "times", _frozen(times))

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.length

    def __repr__(self) -> str:
        return f"TimeSeries(n={self.length}, d={self.channels})"

    def to_csv(self, path) -> None:
        """Write one row per step: ``time, ch0, ch1, ...``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"ch{j}" for j in range(self.channels)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(values=data[:, 1:], times=data[:, 0])


CLOCKS = ("unit", "raw")


def time_augment(s: TimeSeries, clock: str = "unit") -> TimeSeries:
    """Prepend a time channel.

    ``clock="unit"`` rescales the timestamps to ``[0, 1]``; ``clock="raw"``
    keeps their units and only shifts the first timestamp to zero.
    """
    if clock not in CLOCKS:
        raise ValueError(f"unknown clock {clock!r}")
    t = s.times - s.times[0]
    span = t[-1]
    if clock == "unit":
        t = t / span if span > 0 else np.zeros_like(t)
    return TimeSeries(np.column_stack([t, s.values]), s.times)


def median_pairwise_sq_dist(s: TimeSeries | np.ndarray) -> float:
    """Median squared Euclidean distance over pairs ``i < j`` of observations.

    Self-pairs are excluded. Accepts a series or a raw ``(n, d)`` point array.
    """
    pts = s.values if isinstance(s, TimeSeries) else np.asarray(s, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    med = float(np.median(pdist(pts, "sqeuclidean")))
    if med <= 0.0:
        raise DegenerateScale("median pairwise squared distance is zero")
    return med


def stack_values(series: Sequence[TimeSeries]) -> np.ndarray:
    """Stack equal-shape series values into an ``(N, n, d)`` array."""
    return np.stack([s.values for s in series])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Simulated pairs ``(x_i, theta_i)`` and the seed they came from."""

    series: tuple
    thetas: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        series = tuple(self.series)
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=np.float64))
        if len(series) != thetas.shape[0]:
            raise ValueError("series and thetas disagree in length")
        if len({s.channels for s in series}) > 1:
            raise ValueError("all series must share the channel dimension")
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "thetas", _frozen(thetas))

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self) -> Iterator[tuple[TimeSeries, np.ndarray]]:
        return iter(zip(self.series, self.thetas))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(tuple(self.series[i] for i in idx), self.thetas[idx], self.seed, dict(self.meta))

    def to_json(self) -> dict:
        return {
            "seed": int(self.seed),
            **({"meta": self.meta} if self.meta else {}),
            "entries": [
                {"theta": th.tolist(), "times": s.times.tolist(), "values": s.values.tolist()}
                for s, th in self
            ],
        }

    @classmethod
    def from_json(cls, blob: dict) -> "Dataset":
        entries = blob["entries"]
        series = tuple(TimeSeries(e["values"], e["times"]) for e in entries)
        thetas = np.array([e["theta"] for e in entries], dtype=np.float64)
        return cls(series, thetas.reshape(len(entries), -1), int(blob.get("seed", 0)), blob.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_json(json.loads(Path(path).read_text()))
