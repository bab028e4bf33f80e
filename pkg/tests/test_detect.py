import math
import random
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftwatch.detect import (
    ChangeEvent,
    DetectorConfig,
    DetectorState,
    Direction,
    estimate_arl,
    reset,
    run_detector,
    step,
    sufficient_statistic,
)
from driftwatch.lexicon import ScoredPost

from .reference import brute_force_run_length, reference_events

PAPER = DetectorConfig(theta0_init=-0.5, delta=0.5, sigma=1.0, h=20.0)


@pytest.mark.parametrize(
    "y, expected", [(-0.25, 0.0), (0.5, 0.375), (-1.0, -0.375)]
)
def test_sufficient_statistic(y, expected):
    assert sufficient_statistic(y, -0.5, 0.0, 1.0) == expected


@given(
    st.floats(-10, 10), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 5)
)
def test_sufficient_statistic_sign(y, theta0, theta1, sigma):
    s = sufficient_statistic(y, theta0, theta1, sigma)
    expected = np.sign(theta1 - theta0) * np.sign(y - (theta0 + theta1) / 2)
    if abs(s) > 1e-12:
        assert np.sign(s) == expected


@pytest.mark.parametrize(
    "kwargs",
    [{"delta": 0}, {"sigma": -1}, {"h": 0}, {"reset_window": 0}, {"reset_window": 2.5},
     {"theta0_init": float("nan")}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DetectorConfig(**kwargs)


def first_event(ys, config=PAPER):
    events, _ = run_detector(ys, config)
    return events[0] if events else None


def test_constant_zero_alarms_positive_at_160():
    ev = first_event([0.0] * 400)
    assert (ev.index, ev.direction) == (160, Direction.POSITIVE)
    assert ev.g_at_alarm == 20.0


def test_constant_minus_one_alarms_negative_at_160():
    ev = first_event([-1.0] * 400)
    assert (ev.index, ev.direction) == (160, Direction.NEGATIVE)


def test_constant_theta0_never_alarms():
    state = DetectorState(PAPER)
    for _ in range(5000):
        assert state.update(-0.5) is None
        assert state.pos.g == 0.0 and state.neg.g == 0.0


def test_alarm_after_neutral_prefix():
    events, state = run_detector([-0.5] * 100 + [0.0] * 160, PAPER)
    assert [(e.index, e.direction) for e in events] == [(260, Direction.POSITIVE)]
    assert state.k == 260


def test_empty_stream():
    events, state = run_detector([], PAPER)
    assert events == [] and state.k == 0


def test_step_with_scored_posts():
    state = DetectorState(DetectorConfig(h=1.0))
    post = ScoredPost(0, None, 1, 1, 1)
    state, ev = step(state, post)
    assert ev is None and state.pos.g == 0.625
    state, ev = step(state, post)
    assert ev is not None and ev.direction is Direction.POSITIVE and ev.index == 2


def test_step_advances_counter_and_ring():
    state = DetectorState(DetectorConfig(reset_window=3))
    for y in [1, 2, 3, 4]:
        step(state, ScoredPost(0, None, y, 0, 0))
    assert state.k == 4
    assert list(state.ring) == [2, 3, 4]


@pytest.mark.parametrize(
    "ring, theta0_after",
    [([0, 0, 0, 0], 0.0), ([1, -1, 1, -1], 0.0), ([2, 1, 1, 0], 1.0)],
)
def test_reset(ring, theta0_after):
    state = DetectorState(PAPER)
    state.ring.extend(ring)
    state.pos.S, state.pos.m, state.pos.g = 25.0, 0.0, 25.0
    reset(state, Direction.POSITIVE)
    assert state.theta0 == theta0_after
    assert state.pos.theta1 == theta0_after + 0.5
    assert state.neg.theta1 == theta0_after - 0.5
    assert (state.pos.S, state.pos.m, state.pos.g) == (0.0, 0.0, 0.0)
    assert (state.neg.S, state.neg.m, state.neg.g) == (0.0, 0.0, 0.0)
    assert len(state.ring) == 0
    assert state.config == PAPER


def test_reset_window_average_includes_alarm_sample():
    config = DetectorConfig(theta0_init=0.0, delta=1.0, h=1.0, reset_window=2)
    events, state = run_detector([0.0, 3.0], config)
    assert events[0].index == 2
    assert events[0].theta0_after == 1.5
    assert state.theta0 == 1.5


def test_tie_resolves_positive(caplog):
    # a sample cannot push both sides up at once, so start from equal g
    state = DetectorState(DetectorConfig(h=1.0))
    # y = theta0 then gives s = -0.125 on both sides
    state.pos.S = state.pos.g = 1.125
    state.neg.S = state.neg.g = 1.125
    with caplog.at_level("INFO"):
        ev = state.update(-0.5)
    assert ev.direction is Direction.POSITIVE and ev.g_at_alarm == 1.0
    assert "both sides" in caplog.text


def test_one_event_when_both_cross():
    state = DetectorState(DetectorConfig(h=1.0))
    state.pos.S = state.pos.g = 5.0
    state.neg.S = state.neg.g = 3.0
    ev = state.update(-0.5)
    assert ev.direction is Direction.POSITIVE
    assert state.pos.g == state.neg.g == 0.0


def test_matches_reference_on_synthetic_shift():
    rng = np.random.default_rng(2024)
    ys = np.concatenate([rng.normal(-0.5, 1, 5000), rng.normal(0, 1, 5000)]).tolist()
    events, _ = run_detector(ys, PAPER)
    got = [(e.index, e.direction.value, e.theta0_before, e.theta0_after) for e in events]
    assert got == reference_events(ys, -0.5, 0.5, 1.0, 20.0, 50)
    assert got, "expected at least one alarm"


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(-4, 4), max_size=400),
    st.floats(1.0, 8.0),
    st.integers(1, 30),
    st.sampled_from([0.25, 0.5, 1.0]),
)
def test_matches_reference_on_integer_scores(ys, h, w, delta):
    events, _ = run_detector(ys, DetectorConfig(theta0_init=0.0, delta=delta, h=h, reset_window=w))
    got = [(e.index, e.direction.value, e.theta0_before, e.theta0_after) for e in events]
    assert got == reference_events(ys, 0.0, delta, 1.0, h, w)


sequences = st.lists(st.floats(-20, 20, allow_nan=False), max_size=300)


@settings(max_examples=200)
@given(sequences, st.floats(-2, 2), st.floats(0.05, 2), st.floats(0.2, 3))
def test_g_equivalence_and_nonnegativity(ys, theta0, delta, sigma):
    state = DetectorState(DetectorConfig(theta0, delta, sigma, h=1e300))
    g_pos = g_neg = 0.0
    for y in ys:
        assert state.update(y) is None
        g_pos = max(0.0, g_pos + sufficient_statistic(y, theta0, theta0 + delta, sigma))
        g_neg = max(0.0, g_neg + sufficient_statistic(y, theta0, theta0 - delta, sigma))
        assert state.pos.g >= 0 and state.neg.g >= 0
        assert state.pos.m <= state.pos.S and state.neg.m <= state.neg.S
        assert state.pos.g == state.pos.S - state.pos.m
        assert abs(state.pos.g - g_pos) <= 1e-9
        assert abs(state.neg.g - g_neg) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-3, 3), max_size=300), st.floats(0.5, 6), st.integers(1, 20))
def test_alarm_soundness_and_reset_invariants(ys, h, w):
    config = DetectorConfig(theta0_init=-0.5, delta=0.5, h=h, reset_window=w)
    state = DetectorState(config)
    for y in ys:
        recent = (list(state.ring) + [y])[-w:]
        ev = state.update(y)
        if ev is None:
            assert max(state.pos.g, state.neg.g) < h
        else:
            assert ev.g_at_alarm >= h
            assert ev.theta0_after == statistics.fmean(recent)
            assert state.pos.theta1 == state.theta0 + 0.5
            assert state.neg.theta1 == state.theta0 - 0.5
            assert math.isclose(state.pos.theta1 - state.theta0, 0.5, abs_tol=1e-12)
            assert math.isclose(state.theta0 - state.neg.theta1, 0.5, abs_tol=1e-12)
        assert len(state.ring) <= w


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(-6, 6), max_size=300),
    st.sampled_from([0.5, 1.0, 2.0, 4.0]),
    st.integers(-8, 8),
    st.sampled_from([1, 2]),
    st.sampled_from([1.0, 2.0, 3.0, 7.5]),
)
def test_shift_scale_covariance(ys, a, b, w, h):
    # dyadic scales and windows of 1 or 2 keep every operation exact
    base = DetectorConfig(theta0_init=-0.5, delta=0.5, sigma=1.0, h=h, reset_window=w)
    moved = DetectorConfig(theta0_init=a * -0.5 + b, delta=a * 0.5, sigma=a * 1.0, h=h, reset_window=w)
    ev1, _ = run_detector([float(y) for y in ys], base)
    ev2, _ = run_detector([a * y + b for y in ys], moved)
    assert [(e.index, e.direction) for e in ev1] == [(e.index, e.direction) for e in ev2]


def test_state_size_is_constant():
    state = DetectorState(DetectorConfig(reset_window=8))
    rng = random.Random(3)
    for _ in range(20000):
        state.update(rng.gauss(-0.5, 1))
        assert len(state.ring) <= 8
    assert set(vars(state)) == {"config", "theta0", "pos", "neg", "k", "ring", "alarms"}


def test_event_roundtrip():
    ev = first_event([0.0] * 200)
    assert ChangeEvent.from_dict(ev.to_dict()) == ev


# --- average run length -----------------------------------------------------

def test_arl_matches_brute_force_simulation():
    config = DetectorConfig(theta0_init=-0.5, delta=0.5, sigma=1.0, h=0.5)
    est = estimate_arl(config, true_mean=0.0, runs=1000, max_len=10_000, seed=11)
    rng = random.Random(99)
    oracle = [brute_force_run_length(-0.5, 0.5, 1.0, 0.5, 0.0, 10_000, rng) for _ in range(1000)]
    oracle_mean = statistics.fmean(oracle)
    oracle_se = statistics.stdev(oracle) / math.sqrt(len(oracle))
    combined = math.hypot(est.std_error, oracle_se)
    assert abs(est.mean_run_length - oracle_mean) <= 3 * combined
    assert est.censored_fraction == 0.0


def test_arl_increases_with_threshold():
    means = []
    for h in (5.0, 10.0, 20.0):
        config = DetectorConfig(theta0_init=0.0, delta=0.5, sigma=4.0, h=h)
        means.append(estimate_arl(config, true_mean=0.0, runs=100, max_len=50_000, seed=5).mean_run_length)
    assert means[0] < means[1] <= means[2]


def test_arl_censoring_edge():
    config = DetectorConfig(h=1e6)
    est = estimate_arl(config, true_mean=-0.5, runs=1, max_len=1, seed=0)
    assert est.mean_run_length == 1.0
    assert est.censored_fraction == 1.0
    assert est.std_error == 0.0


def test_arl_is_seed_deterministic_and_chunk_independent():
    config = DetectorConfig(h=2.0)
    a = estimate_arl(config, 0.0, runs=50, max_len=5000, seed=3, chunk=64)
    b = estimate_arl(config, 0.0, runs=50, max_len=5000, seed=3, chunk=4096)
    assert a == b


def test_arl_rejects_bad_arguments():
    with pytest.raises(ValueError):
        estimate_arl(PAPER, 0.0, runs=0, max_len=10, seed=0)
