"""Offline analyses over a finished score series.

Moving average, histogram, and a binary-segmentation changepoint search used
to cross-check the online detector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence

import numpy as np


@dataclass
class ScoreSeries:
    values: list[float]
    timestamps: list[datetime | None] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.timestamps:
            self.timestamps = [None] * len(self.values)
        if len(self.timestamps) != len(self.values):
            raise ValueError("values and timestamps must have equal length")
        prev = None
        for ts in self.timestamps:
            if ts is None:
                continue
            if prev is not None and ts < prev:
                raise ValueError("timestamps must be non-decreasing")
            prev = ts

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SegmentationResult:
    changepoints: list[int]
    segment_means: list[float]
    total_cost: float
    penalty: float


def moving_average(series: ScoreSeries, window: int) -> ScoreSeries:
    """Trailing mean over ``window`` samples; the first ``window - 1`` entries are ``None``."""
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(series)
    out: list[float | None] = [None] * n
    if window <= n:
        y = np.asarray(series.values, dtype=float)
        means = np.lib.stride_tricks.sliding_window_view(y, window).mean(axis=1)
        out[window - 1:] = means.tolist()
    return ScoreSeries(out, list(series.timestamps))


def histogram(series: ScoreSeries, bin_width: float = 1.0) -> list[tuple[float, int]]:
    """Counts per bin ``[k*w, (k+1)*w)`` as ``(lower_edge, count)``, empty bins omitted."""
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    values = [v for v in series.values if v is not None]
    if not values:
        return []
    bins = np.floor(np.asarray(values, dtype=float) / bin_width).astype(np.int64)
    lo, hi = int(bins.min()), int(bins.max())
    counts = np.bincount(bins - lo, minlength=hi - lo + 1)
    return [((lo + i) * bin_width, int(c)) for i, c in enumerate(counts) if c]


def default_penalty(n: int) -> float:
    return 2.0 * math.log(n)


def _best_split(csum: np.ndarray, a: int, b: int) -> tuple[float, int]:
    """Largest cost reduction from splitting ``y[a:b]`` into ``y[a:t]``, ``y[t:b]``."""
    if b - a < 2:
        return 0.0, -1
    t = np.arange(a + 1, b)
    n1 = (t - a).astype(float)
    n2 = (b - t).astype(float)
    left = csum[t] - csum[a]
    right = csum[b] - csum[t]
    diff = left / n1 - right / n2
    gain = n1 * n2 / (b - a) * diff * diff
    i = int(np.argmax(gain))  # first maximum -> smallest index on ties
    return float(gain[i]), int(t[i])


def segment(
    series: ScoreSeries | Sequence[float],
    penalty: float | str = "default",
    max_changepoints: int = 5,
) -> SegmentationResult:
    """Binary segmentation for changes in mean under squared-error cost.

    Splits are added greedily, each time at the position (over all current
    segments) with the largest cost reduction, up to ``max_changepoints``.
    The number of changepoints kept is then the prefix of that sequence that
    minimises ``cost + penalty * k``; the default penalty is ``2 ln n``.
    Changepoints are reported as the 1-based index of the last sample of each
    segment but the final one.
    """
    values = series.values if isinstance(series, ScoreSeries) else list(series)
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 2:
        raise ValueError("segmentation needs at least 2 samples")
    if max_changepoints < 0:
        raise ValueError("max_changepoints must be >= 0")
    beta = default_penalty(n) if penalty == "default" else float(penalty)

    yc = y - y.mean()
    csum = np.concatenate(([0.0], np.cumsum(yc)))
    base_cost = float(np.sum(yc * yc))

    order: list[int] = []
    gains: list[float] = []
    candidates: dict[tuple[int, int], tuple[float, int]] = {(0, n): _best_split(csum, 0, n)}
    while len(order) < max_changepoints:
        best = None
        for (a, b), (gain, t) in candidates.items():
            if t < 0 or gain <= 0.0:
                continue
            if best is None or gain > best[0] or (gain == best[0] and t < best[1]):
                best = (gain, t, a, b)
        if best is None:
            break
        gain, t, a, b = best
        del candidates[(a, b)]
        candidates[(a, t)] = _best_split(csum, a, t)
        candidates[(t, b)] = _best_split(csum, t, b)
        order.append(t)
        gains.append(gain)

    best_k, best_cost, cost = 0, base_cost, base_cost
    for k, gain in enumerate(gains, start=1):
        cost -= gain
        if cost + beta * k < best_cost + beta * best_k:
            best_k, best_cost = k, cost
    changepoints = sorted(order[:best_k])
    bounds = [0, *changepoints, n]
    means = [float(y[lo:hi].mean()) for lo, hi in zip(bounds, bounds[1:])]
    sse = sum(float(np.sum((y[lo:hi] - m) ** 2)) for lo, hi, m in zip(bounds, bounds[1:], means))
    return SegmentationResult(changepoints, means, sse + beta * len(changepoints), beta)


@dataclass
class MatchReport:
    matched: list[tuple[int, int]]
    online_only: list[int]
    offline_only: list[int]

    @property
    def deltas(self) -> list[int]:
        return [on - off for on, off in self.matched]

    def to_dict(self) -> dict:
        return {
            "matched": [{"online": on, "offline": off, "delta": on - off} for on, off in self.matched],
            "online_only": self.online_only,
            "offline_only": self.offline_only,
        }


def compare(online_events, offline: SegmentationResult | Sequence[int], tolerance: int) -> MatchReport:
    """Pair online alarms with offline changepoints, closest pairs first.

    ``online_events`` may be :class:`~driftwatch.detect.ChangeEvent` objects or
    plain indices. Each point is used at most once and a pair is only formed
    when the indices are within ``tolerance`` of each other.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    online = [int(getattr(e, "index", e)) for e in online_events]
    off = list(offline.changepoints if isinstance(offline, SegmentationResult) else offline)
    pairs = sorted(
        (abs(a - b), a, b, i, j)
        for i, a in enumerate(online)
        for j, b in enumerate(off)
        if abs(a - b) <= tolerance
    )
    used_on: set[int] = set()
    used_off: set[int] = set()
    matched = []
    for _, a, b, i, j in pairs:
        if i in used_on or j in used_off:
            continue
        used_on.add(i)
        used_off.add(j)
        matched.append((a, b))
    matched.sort()
    return MatchReport(
        matched,
        [a for i, a in enumerate(online) if i not in used_on],
        [b for j, b in enumerate(off) if j not in used_off],
    )
