import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergorisk.errors import HalError
from ergorisk.hal import (
    FingerForces, HalParams, count_exertions, finger_force_sums, force_channels,
    hal_counts, hal_from_count, hal_series, sliding_counts,
)
from ergorisk.streams import N_TAXELS, GloveFrame
from ergorisk.taxels import FINGERS, default_taxel_map
from helpers import brute_force_counts, synthetic_trial

P = HalParams()
W = P.window_ticks


def glove(taxels):
    taxels = np.asarray(taxels, dtype=float)
    return GloveFrame("right", taxels, taxels >= 100)


def window_with(index=None, total=None, n=W):
    ch = np.zeros((n, 6))
    if index is not None:
        ch[:, 1] = index
    if total is not None:
        ch[:, 5] = total
    return ch


# -- finger sums ------------------------------------------------------------------

def test_zero_glove():
    f = finger_force_sums(glove(np.zeros(N_TAXELS)))
    assert np.all(f.f == 0) and f.total == 0


def test_index_additivity():
    m = default_taxel_map()
    tax = np.zeros(N_TAXELS)
    tax[m.taxels_of("index")[:3]] = 5.0
    f = finger_force_sums(glove(tax), m)
    assert f.f[1] == 15.0 and f.total == 15.0


@given(st.lists(st.floats(0, 100), min_size=N_TAXELS, max_size=N_TAXELS))
def test_sums_match_group_by(values):
    m = default_taxel_map()
    f = finger_force_sums(glove(values), m)
    expected = {name: 0.0 for name in FINGERS}
    for v, fid in zip(values, m.finger):
        expected[FINGERS[fid]] += v
    for i, name in enumerate(FINGERS[:5]):
        assert f.f[i] == pytest.approx(expected[name], abs=1e-9)
    assert f.total == pytest.approx(sum(expected[n] for n in FINGERS[:5]), abs=1e-9)
    with_palm = force_channels(np.array(values), m, include_palm=True)[0, 5]
    assert with_palm == pytest.approx(f.total + expected["palm"], abs=1e-9)


# -- exertion counting ------------------------------------------------------------

def test_sustained_press_counts_once():
    assert count_exertions(window_with(index=20.0)).count == 1


def test_five_pulses():
    ch = np.zeros((W, 6))
    for k in range(5):
        ch[60 + 100 * k: 90 + 100 * k, 1] = 20.0
    ch[:, 5] = ch[:, :5].sum(axis=1)
    assert count_exertions(ch).count == 5


def test_total_threshold_alone():
    ch = np.zeros((W, 6))
    ch[:, :5] = 9.0
    ch[:, 5] = 45.0
    assert count_exertions(ch).count == 1


def test_simultaneous_channels_count_once():
    ch = np.zeros((W, 6))
    ch[100, :] = [16, 16, 16, 0, 0, 48]
    assert count_exertions(ch).count == 1


def test_hysteresis_requires_drop_below_rearm_level():
    ch = np.zeros((W, 6))
    # 20 -> 14 (above 13.5, stays disarmed) -> 20 -> 13 (re-arms) -> 20
    ch[10:20, 1], ch[20:30, 1], ch[30:40, 1], ch[40:50, 1], ch[50:60, 1] = 20, 14, 20, 13, 20
    assert count_exertions(ch).count == 2


def test_threshold_is_strict():
    assert count_exertions(window_with(index=15.0)).count == 0
    assert count_exertions(window_with(index=np.nextafter(15.0, 16))).count == 1


def test_accepts_finger_force_sequence():
    seq = [FingerForces(np.array([0, 20.0, 0, 0, 0]), 20.0)] * W
    assert count_exertions(seq).count == 1


def test_wrong_window_length():
    with pytest.raises(HalError):
        count_exertions(np.zeros((W - 1, 6)))


# -- HAL from count -----------------------------------------------------------------

def test_spot_values():
    assert hal_from_count(0) == 0.0
    assert hal_from_count(10) == 10.0
    raw = 6.56 * math.log(75 / 4.18)
    assert raw == pytest.approx(18.94, abs=0.01)
    assert hal_from_count(1) == pytest.approx(7.59, abs=0.01)
    fa = 0.1 ** 1.31
    assert hal_from_count(1) == pytest.approx(6.56 * math.log(75 * fa / (1 + 3.18 * fa)), abs=1e-12)


def test_duty_outside_log_grouping():
    p = HalParams(formula_grouping="duty_outside_log")
    fa = 1.0
    assert hal_from_count(10, p) == pytest.approx(6.56 * math.log(75) * fa / (1 + 3.18 * fa))


@pytest.mark.parametrize("grouping", ["as_printed", "duty_outside_log"])
def test_monotone_in_count(grouping):
    p = HalParams(formula_grouping=grouping)
    values = [hal_from_count(c, p) for c in range(101)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert min(values) >= 0 and max(values) <= 10


@pytest.mark.parametrize("kw", [dict(finger_threshold=0), dict(rearm_fraction=1.0),
                                dict(formula_grouping="radwin"), dict(work_time=-1)])
def test_params_validated(kw):
    with pytest.raises(HalError):
        HalParams(**kw)


def test_window_ticks_invariant():
    assert HalParams().window_ticks == 600
    assert HalParams(work_time=5).window_ticks == 300


# -- sliding window ----------------------------------------------------------------

def pulse_channels(n, rng):
    """Piecewise-constant random force levels, dense around the thresholds."""
    levels = rng.choice([0.0, 5.0, 13.0, 14.0, 15.0, 16.0, 25.0], size=(n // 7 + 1, 5))
    f = np.repeat(levels, 7, axis=0)[:n]
    return np.column_stack([f, f.sum(axis=1)])


@given(st.integers(0, 10_000), st.integers(601, 1400))
def test_sliding_equals_recount(seed, n):
    ch = pulse_channels(n, np.random.default_rng(seed))
    fast = sliding_counts(ch, P)
    oracle = brute_force_counts(ch, P.thresholds, P.rearm_fraction, W)
    assert np.array_equal(fast, oracle)


@given(st.integers(0, 10_000), st.floats(1.0, 4.0))
def test_scaling_up_keeps_any_exertion(seed, c):
    ch = pulse_channels(900, np.random.default_rng(seed))
    base = sliding_counts(ch, P)
    scaled = sliding_counts(ch * c, P)
    assert np.all(scaled[base > 0] >= 1)


def test_scaling_up_can_merge_exertions():
    # 16 / 10 / 16 is two presses; tripled, the dip (30) stays above the re-arm level
    ch = np.zeros((W, 6))
    ch[10:20, 1], ch[20:30, 1], ch[30:40, 1] = 16, 10, 16
    assert count_exertions(ch).count == 2
    assert count_exertions(ch * 3).count == 1


def test_spot_recount_against_single_window():
    ch = pulse_channels(1000, np.random.default_rng(3))
    fast = sliding_counts(ch, P)
    for k in (600, 701, 999):
        assert fast[k] == count_exertions(ch[k - W + 1:k + 1]).count


def test_series_padding_and_range():
    trial = synthetic_trial()
    s = hal_series(trial)
    assert len(s) == len(trial)
    for side in ("left", "right"):
        v = s.side(side)
        assert np.all(v[:W] == 0.0)
        assert v.min() >= 0 and v.max() <= 10


def test_series_matches_count_mapping():
    trial = synthetic_trial()
    counts = hal_counts(trial)
    s = hal_series(trial)
    k = len(trial) - 1
    assert s.right[k] == hal_from_count(int(counts["right"][k]))


def test_all_zero_forces_give_zero_series(monkeypatch):
    trial = synthetic_trial()
    import ergorisk.hal as hal
    monkeypatch.setattr(hal, "trial_channels",
                        lambda *a, **k: {s: np.zeros((len(trial), 6)) for s in ("left", "right")})
    s = hal.hal_series(trial)
    assert np.all(s.left == 0) and np.all(s.right == 0)


def test_two_hz_pinch_steady_state():
    n = 1500
    t = np.arange(n) / 60.0
    index = 20.0 * 0.5 * (1 - np.cos(2 * np.pi * 2.0 * t))
    ch = np.zeros((n, 6))
    ch[:, 1] = index
    ch[:, 5] = index
    fast = sliding_counts(ch, P)
    oracle = brute_force_counts(ch, P.thresholds, P.rearm_fraction, W)
    assert np.array_equal(fast, oracle)
    assert set(fast[W:].tolist()) <= {20, 21}
    assert 20 in set(fast[W:].tolist())


def test_short_trial_rejected():
    trial = synthetic_trial(duration=8.0)
    with pytest.raises(HalError, match="10 s window"):
        hal_series(trial)
