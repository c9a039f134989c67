"""Sampled time signals, labeled datasets, and piecewise-linear interpolation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TimeSeries", "Dataset", "interpolate", "one_hot", "group_by_grid"]


def one_hot(index: int, num_classes: int) -> np.ndarray:
    y = np.zeros(num_classes)
    y[index] = 1.0
    return y


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One sampled signal x(t_0), ..., x(t_M) with an optional one-hot label.

    ``values`` has shape (M+1, n).  1-D input is promoted to a single channel.
    """

    id: str
    times: np.ndarray
    values: np.ndarray
    label: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) < 2:
            raise ValueError(f"{self.id}: need at least two sample times")
        if values.shape[0] != len(times):
            raise ValueError(f"{self.id}: {len(times)} times but {values.shape[0]} samples")
        if times[0] != 0.0:
            raise ValueError(f"{self.id}: sampling must start at t=0")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"{self.id}: times must be strictly increasing")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(times)):
            raise ValueError(f"{self.id}: non-finite sample")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.label is not None:
            y = np.array(self.label, dtype=float)
            if y.ndim != 1 or np.count_nonzero(y == 1.0) != 1 or np.count_nonzero(y) != 1:
                raise ValueError(f"{self.id}: label must be one-hot")
            y.setflags(write=False)
            object.__setattr__(self, "label", y)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def label_index(self) -> int:
        if self.label is None:
            raise ValueError(f"{self.id} is unlabeled")
        return int(np.argmax(self.label))

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.id, self.times, values, self.label, dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        same_label = (self.label is None and other.label is None) or (
            self.label is not None
            and other.label is not None
            and np.array_equal(self.label, other.label)
        )
        return (
            self.id == other.id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
            and same_label
            and self.meta == other.meta
        )


@dataclass
class Dataset:
    series: list
    n: int
    num_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = set()
        for ts in self.series:
            if ts.n != self.n:
                raise ValueError(f"{ts.id}: input dimension {ts.n} != {self.n}")
            if ts.label is not None and len(ts.label) != self.num_classes:
                raise ValueError(f"{ts.id}: label length != {self.num_classes}")
            if ts.id in ids:
                raise ValueError(f"duplicate series id {ts.id!r}")
            ids.add(ts.id)

    def __len__(self):
        return len(self.series)

    def __iter__(self):
        return iter(self.series)

    def __getitem__(self, i):
        return self.series[i]

    def subset(self, indices) -> "Dataset":
        return Dataset([self.series[i] for i in indices], self.n, self.num_classes, dict(self.metadata))

    def labels(self) -> np.ndarray:
        return np.array([ts.label_index for ts in self.series], dtype=int)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels(), minlength=self.num_classes)


def interpolate(ts: TimeSeries, t: float) -> np.ndarray:
    """Linear interpolation of the samples at time ``t``, clamped outside."""
    times, x = ts.times, ts.values
    if t <= times[0]:
        return x[0].copy()
    if t >= times[-1]:
        return x[-1].copy()
    j = int(np.searchsorted(times, t, side="right")) - 1
    w = (t - times[j]) / (times[j + 1] - times[j])
    return x[j] + w * (x[j + 1] - x[j])


def group_by_grid(series) -> list:
    """Group series sharing an identical time grid.

    Returns a list of index lists, in order of first appearance; solves are
    vectorized within a group.
    """
    groups: dict = {}
    for i, ts in enumerate(series):
        key = (len(ts.times), ts.times.tobytes())
        groups.setdefault(key, []).append(i)
    return list(groups.values())
