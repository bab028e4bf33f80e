"""Two-sided CUSUM detector for shifts in the mean of a Gaussian stream.

Each side accumulates the log-likelihood ratio ``S`` of its post-change mean
against the current pre-change mean ``theta0`` and alarms when ``S`` rises
``h`` above its running minimum. After an alarm both sides restart from zero
and ``theta0`` is re-estimated as the mean of the last ``reset_window``
observations, so later alarms are relative to the current level.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass
from datetime import datetime
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

from .ingest import format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)


class Direction(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class DetectorConfig:
    theta0_init: float = -0.5
    delta: float = 0.5
    sigma: float = 1.0
    h: float = 20.0
    reset_window: int = 50

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.h > 0:
            raise ValueError(f"h must be > 0, got {self.h}")
        if int(self.reset_window) != self.reset_window or self.reset_window < 1:
            raise ValueError(f"reset_window must be an integer >= 1, got {self.reset_window}")
        if not math.isfinite(self.theta0_init):
            raise ValueError("theta0_init must be finite")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChangeEvent:
    index: int
    timestamp: datetime | None
    direction: Direction
    theta0_before: float
    theta0_after: float
    g_at_alarm: float

    def to_dict(self) -> dict:
        ts = self.timestamp
        return {
            "index": self.index,
            "timestamp": format_timestamp(ts) if ts is not None else None,
            "direction": self.direction.value,
            "theta0_before": self.theta0_before,
            "theta0_after": self.theta0_after,
            "g_at_alarm": self.g_at_alarm,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ChangeEvent":
        ts = obj.get("timestamp")
        return cls(
            index=int(obj["index"]),
            timestamp=parse_timestamp(ts) if ts else None,
            direction=Direction(obj["direction"]),
            theta0_before=float(obj["theta0_before"]),
            theta0_after=float(obj["theta0_after"]),
            g_at_alarm=float(obj["g_at_alarm"]),
        )


def sufficient_statistic(y: float, theta0: float, theta1: float, sigma: float) -> float:
    """Log-likelihood ratio of N(theta1, sigma^2) against N(theta0, sigma^2) at ``y``."""
    return (theta1 - theta0) / (sigma * sigma) * (y - (theta0 + theta1) / 2)


class CusumSide:
    """One-sided cumulative sum with its running minimum."""

    __slots__ = ("S", "m", "g", "theta1")

    def __init__(self, theta1: float) -> None:
        self.S = 0.0
        self.m = 0.0
        self.g = 0.0
        self.theta1 = theta1

    def add(self, s: float) -> float:
        S = self.S + s
        self.S = S
        if S < self.m:
            self.m = S
        self.g = S - self.m
        return self.g

    def zero(self, theta1: float) -> None:
        self.S = self.m = self.g = 0.0
        self.theta1 = theta1

    def __repr__(self) -> str:
        return f"CusumSide(S={self.S!r}, m={self.m!r}, g={self.g!r}, theta1={self.theta1!r})"


class DetectorState:
    """Mutable state of the two-sided detector. Feed it with :meth:`update`."""

    def __init__(self, config: DetectorConfig) -> None:
        self.config = config
        self.theta0 = float(config.theta0_init)
        self.pos = CusumSide(self.theta0 + config.delta)
        self.neg = CusumSide(self.theta0 - config.delta)
        self.k = 0
        self.ring: deque[float] = deque(maxlen=int(config.reset_window))
        self.alarms = 0

    def update(self, y: float, timestamp: datetime | None = None) -> ChangeEvent | None:
        """Process one observation; return the alarm it triggers, if any."""
        self.k += 1
        self.ring.append(y)
        theta0 = self.theta0
        sigma = self.config.sigma
        var = sigma * sigma
        pos, neg = self.pos, self.neg
        # CusumSide.add inlined for both sides; same operation order as
        # sufficient_statistic()
        S = pos.S + (pos.theta1 - theta0) / var * (y - (theta0 + pos.theta1) / 2)
        pos.S = S
        if S < pos.m:
            pos.m = S
        g_pos = pos.g = S - pos.m
        S = neg.S + (neg.theta1 - theta0) / var * (y - (theta0 + neg.theta1) / 2)
        neg.S = S
        if S < neg.m:
            neg.m = S
        g_neg = neg.g = S - neg.m
        h = self.config.h
        if g_pos < h and g_neg < h:
            return None
        if g_pos >= g_neg:
            if g_pos == g_neg:
                logger.info("both sides crossed h with g=%r at k=%d; reporting positive", g_pos, self.k)
            direction, g = Direction.POSITIVE, g_pos
        else:
            direction, g = Direction.NEGATIVE, g_neg
        before = self.theta0
        reset(self, direction)
        return ChangeEvent(self.k, timestamp, direction, before, self.theta0, g)

    def snapshot(self) -> dict:
        return {
            "k": self.k,
            "theta0": self.theta0,
            "pos": {"S": self.pos.S, "m": self.pos.m, "g": self.pos.g, "theta1": self.pos.theta1},
            "neg": {"S": self.neg.S, "m": self.neg.m, "g": self.neg.g, "theta1": self.neg.theta1},
            "ring_len": len(self.ring),
        }


def step(state: DetectorState, post) -> tuple[DetectorState, ChangeEvent | None]:
    """Advance the detector by one scored post (anything with ``score``/``created_at``)."""
    event = state.update(post.score, getattr(post, "created_at", None))
    return state, event


def reset(state: DetectorState, direction: Direction | str) -> DetectorState:
    """Restart both sides around the mean of the buffered recent observations."""
    assert state.ring, "reset needs at least one observation"
    delta = state.config.delta
    state.theta0 = math.fsum(state.ring) / len(state.ring)
    state.pos.zero(state.theta0 + delta)
    state.neg.zero(state.theta0 - delta)
    state.ring.clear()
    state.alarms += 1
    return state


def run_detector(
    scores: Iterable, config: DetectorConfig
) -> tuple[list[ChangeEvent], DetectorState]:
    """Run the detector over scored posts (or bare numbers) in one pass."""
    state = DetectorState(config)
    update = state.update
    events: list[ChangeEvent] = []
    for post in scores:
        if isinstance(post, (int, float)):
            event = update(post)
        else:
            event = update(post.score, getattr(post, "created_at", None))
        if event is not None:
            events.append(event)
    return events, state


class ArlEstimate(NamedTuple):
    mean_run_length: float
    std_error: float
    censored_fraction: float


def _first_alarm(
    rng: np.random.Generator,
    theta0: float,
    delta: float,
    sigma: float,
    h: float,
    true_mean: float,
    max_len: int,
    chunk: int,
) -> int | None:
    var = sigma * sigma
    c_pos, mid_pos = delta / var, theta0 + delta / 2
    c_neg, mid_neg = -delta / var, theta0 - delta / 2
    S_pos = m_pos = S_neg = m_neg = 0.0
    done = 0
    while done < max_len:
        n = min(chunk, max_len - done)
        y = rng.normal(true_mean, sigma, n)
        cs_pos = S_pos + np.cumsum(c_pos * (y - mid_pos))
        cs_neg = S_neg + np.cumsum(c_neg * (y - mid_neg))
        g_pos = cs_pos - np.minimum(m_pos, np.minimum.accumulate(cs_pos))
        g_neg = cs_neg - np.minimum(m_neg, np.minimum.accumulate(cs_neg))
        hit = np.flatnonzero((g_pos >= h) | (g_neg >= h))
        if hit.size:
            return done + int(hit[0]) + 1
        S_pos, S_neg = float(cs_pos[-1]), float(cs_neg[-1])
        m_pos = min(m_pos, float(cs_pos.min()))
        m_neg = min(m_neg, float(cs_neg.min()))
        done += n
    return None


def estimate_arl(
    config: DetectorConfig,
    true_mean: float,
    runs: int,
    max_len: int,
    seed: int,
    chunk: int = 4096,
) -> ArlEstimate:
    """Monte Carlo average run length of the one-shot two-sided detector.

    Streams are i.i.d. N(true_mean, sigma^2); each run gets its own child
    generator so results do not depend on how runs are scheduled. Runs that
    reach ``max_len`` without alarm count as ``max_len``.
    """
    if runs < 1 or max_len < 1:
        raise ValueError("runs and max_len must be >= 1")
    children = np.random.SeedSequence(seed).spawn(runs)
    lengths = np.empty(runs, dtype=float)
    censored = 0
    for i, child in enumerate(children):
        t = _first_alarm(
            np.random.default_rng(child), config.theta0_init, config.delta,
            config.sigma, config.h, true_mean, max_len, chunk,
        )
        if t is None:
            censored += 1
            t = max_len
        lengths[i] = t
    std_error = float(lengths.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
    return ArlEstimate(float(lengths.mean()), std_error, censored / runs)
