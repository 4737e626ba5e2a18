"""Event streams, spatio-temporal clustering and space-time point clouds.

Streams are stored column-wise (numpy arrays) for vectorized processing;
``Event`` is a lightweight per-row view. Timestamps are microseconds.
Pixel coordinates are floats so that synthetic sub-pixel events can flow
through the same pipeline; sensor-faithful generation quantizes them to
integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "Event",
    "EventStream",
    "EventCluster",
    "ClusterParams",
    "cluster_at",
    "cluster_sequence",
    "downsample",
    "to_spacetime_points",
]


@dataclass(frozen=True)
class Event:
    """One asynchronous brightness change: pixel, timestamp (us), polarity."""

    x: float
    y: float
    t: int
    polarity: int


@dataclass(frozen=True)
class EventStream:
    """Time-sorted event columns plus the sensor resolution."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.t, dtype=np.int64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        p = np.ascontiguousarray(self.p, dtype=np.int8)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event columns must have equal length")
        if len(t) and np.any(np.diff(t) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if len(t) and (np.any(t < 0)):
            raise ValueError("timestamps must be non-negative")
        if len(x) and (x.min() < 0 or x.max() >= self.width):
            raise ValueError("x outside sensor width")
        if len(y) and (y.min() < 0 or y.max() >= self.height):
            raise ValueError("y outside sensor height")
        if len(p) and not np.all(np.isin(p, (-1, 1))):
            raise ValueError("polarity must be +1 or -1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", p)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.x[i]), float(self.y[i]), int(self.t[i]), int(self.p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    @property
    def t_first(self) -> int:
        return int(self.t[0])

    @property
    def t_last(self) -> int:
        return int(self.t[-1])


@dataclass(frozen=True)
class EventCluster:
    """Fixed-count window of events nearest a center time.

    ``short`` is set when the stream held fewer events than requested.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    center_time: int
    camera: str = "left"
    short: bool = False

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.x[i]), float(self.y[i]), int(self.t[i]), int(self.p[i]))

    @property
    def t_min(self) -> int:
        return int(self.t.min())

    def pixels(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


@dataclass(frozen=True)
class ClusterParams:
    """Clustering configuration: events per cluster, inter-cluster interval
    (us) and the space-time normalization constant (us per depth unit)."""

    n: int = 4000
    delta_t_us: int = 10_000
    c_z_us: float = 1000.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("cluster size must be >= 1")
        if self.delta_t_us <= 0:
            raise ValueError("cluster interval must be positive")
        if self.c_z_us <= 0:
            raise ValueError("c_z must be positive")

    @classmethod
    def simulated_scale(cls) -> "ClusterParams":
        """4000 events every 10 ms (640x480-class streams)."""
        return cls(n=4000, delta_t_us=10_000)

    @classmethod
    def high_resolution(cls) -> "ClusterParams":
        """20000 events every 5 ms (1280x720-class streams)."""
        return cls(n=20_000, delta_t_us=5_000)


def _count_within(t_sorted: np.ndarray, center: int, radius: int) -> int:
    lo = np.searchsorted(t_sorted, center - radius, side="left")
    hi = np.searchsorted(t_sorted, center + radius, side="right")
    return int(hi - lo)


def cluster_at(stream: EventStream, t: int, n: int, camera: str = "left") -> EventCluster:
    """The ``n`` events nearest in time to ``t``, sorted by timestamp.

    Ties on |t_i - t| prefer the earlier timestamp, then smaller (y, x, p),
    which makes the selection a pure function of the event multiset.
    """
    total = len(stream)
    if total == 0:
        raise ValueError("empty stream")
    if n < 1:
        raise ValueError("cluster size must be >= 1")
    short = total < n
    take = min(n, total)
    t = int(t)

    # Smallest time radius containing at least `take` events, found by
    # bisection; this stays exact when many events share a timestamp.
    lo_r, hi_r = 0, int(max(abs(t - stream.t_first), abs(stream.t_last - t)))
    while lo_r < hi_r:
        mid = (lo_r + hi_r) // 2
        if _count_within(stream.t, t, mid) >= take:
            hi_r = mid
        else:
            lo_r = mid + 1
    radius = lo_r

    lo = int(np.searchsorted(stream.t, t - radius, side="left"))
    hi = int(np.searchsorted(stream.t, t + radius, side="right"))
    idx = np.arange(lo, hi)
    if len(idx) > take:
        dt = np.abs(stream.t[idx] - t)
        keep = idx[dt < radius]
        ties = idx[dt == radius]
        order = np.lexsort(
            (stream.p[ties], stream.x[ties], stream.y[ties], stream.t[ties])
        )
        idx = np.sort(np.concatenate([keep, ties[order[: take - len(keep)]]]))
    return EventCluster(
        t=stream.t[idx],
        x=stream.x[idx],
        y=stream.y[idx],
        p=stream.p[idx],
        center_time=t,
        camera=camera,
        short=short,
    )


def cluster_sequence(
    stream: EventStream, params: ClusterParams, t0: int, camera: str = "left"
) -> list[EventCluster]:
    """Clusters centered at t0, t0 + dt, ... while the center stays within
    the stream's time span."""
    if len(stream) == 0:
        raise ValueError("empty stream")
    if not (stream.t_first <= t0 <= stream.t_last):
        raise ValueError("t0 outside the stream time span")
    centers = np.arange(t0, stream.t_last + 1, params.delta_t_us, dtype=np.int64)
    return [cluster_at(stream, int(tc), params.n, camera) for tc in centers]


def downsample(cluster: EventCluster, k: int) -> EventCluster:
    """Keep every k-th event in timestamp order; ``k = 1`` is the identity."""
    if k < 1:
        raise ValueError("stride must be >= 1")
    if k == 1:
        return cluster
    sl = slice(0, len(cluster), k)
    return EventCluster(
        t=cluster.t[sl],
        x=cluster.x[sl],
        y=cluster.y[sl],
        p=cluster.p[sl],
        center_time=cluster.center_time,
        camera=cluster.camera,
        short=cluster.short,
    )


def to_spacetime_points(cluster: EventCluster, c_z_us: float) -> np.ndarray:
    """Map events to (x, y, (t - t_min) / c_z) points, shape (N, 3).

    The time origin is cluster-local so clusters are translation-invariant
    in time.
    """
    if c_z_us <= 0:
        raise ValueError("c_z must be positive")
    z = (cluster.t - cluster.t_min).astype(np.float64) / float(c_z_us)
    return np.column_stack([cluster.x, cluster.y, z])
