import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergorisk.bach import (
    M_MAX, THETA_PEAK, BachParams, WristState, alpha_wr, bach_scores, bach_series, clamp_theta,
    m_flex, torques, wrist_torque,
)
from ergorisk.errors import BachError, UndefinedNormalizationError
from ergorisk.streams import N_LANDMARKS, N_TAXELS, GloveFrame, HandPoseFrame, SensorStream
from ergorisk.sync import SyncedTrial
from ergorisk.taxels import TaxelMap, default_taxel_map
from helpers import synthetic_trial


def one_taxel_map(landmark=9, offset=(0.0, 0.0, 0.0)):
    """Every taxel at one landmark; only taxel 0 will be loaded."""
    return TaxelMap(np.full(N_TAXELS, landmark), np.tile(offset, (N_TAXELS, 1)),
                    np.zeros(N_TAXELS, dtype=int))


def flat_hand(side="right", wrist=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), reach=0.10):
    wrist = np.asarray(wrist, dtype=float)
    lm = np.tile(wrist, (N_LANDMARKS, 1))
    lm[1:] += np.linspace(0.02, reach, N_LANDMARKS - 1)[:, None] * [1.0, 0.0, 0.0]
    lm[9] = wrist + [reach, 0.0, 0.0]
    return HandPoseFrame(side, lm, np.asarray(normal, dtype=float), wrist)


def single_load(force, side="right"):
    tax = np.zeros(N_TAXELS)
    tax[0] = force
    return GloveFrame(side, tax, np.zeros(N_TAXELS, dtype=bool))


# -- flexion capacity ---------------------------------------------------------

def test_m_flex_values():
    assert m_flex(0.0) == 10.110
    assert m_flex(-50.0) == pytest.approx(7.646, abs=1e-12)
    assert THETA_PEAK == pytest.approx(41.5)
    assert M_MAX == pytest.approx(-0.001 * 41.5 ** 2 + 0.083 * 41.5 + 10.110, abs=1e-12)
    assert M_MAX == pytest.approx(11.832, abs=1e-3)


def test_alpha_values():
    assert alpha_wr(THETA_PEAK) == 1.0
    assert alpha_wr(0.0) == pytest.approx(1.170, abs=1e-3)
    assert alpha_wr(-50.0) == pytest.approx(1.548, abs=1e-3)


def test_branch_gap_documented():
    left = 0.041 * -8.0 + 9.696
    right = -0.001 * 64 + 0.083 * -8.0 + 10.110
    assert m_flex(-8.0) == pytest.approx(left)
    assert m_flex(np.nextafter(-8.0, 0.0)) == pytest.approx(right)
    assert abs(left - right) <= 0.02
    assert abs(left - right) == pytest.approx(0.014, abs=1e-9)


@given(st.floats(-200, 200))
def test_alpha_at_least_one(theta):
    a = alpha_wr(theta)
    assert a >= 1.0
    assert m_flex(theta) > 0
    if abs(clamp_theta(theta) - THETA_PEAK) > 1e-3:
        assert a > 1.0


def test_out_of_range_angles_clamped():
    assert -90 < clamp_theta(-120.0) < -89.9
    assert 89.9 < WristState(95.0).theta < 90
    assert m_flex(-500.0) == m_flex(-90.0)


# -- wrist torque ---------------------------------------------------------------

def test_zero_forces_zero_torque():
    assert wrist_torque(flat_hand(), single_load(0.0), one_taxel_map()) == 0.0


def test_perpendicular_lever():
    # 10 N pressing along -z at 0.10 m along +x
    tau = wrist_torque(flat_hand(), single_load(10.0), one_taxel_map())
    assert tau == pytest.approx(1.0, abs=1e-9)


def test_taxel_at_wrist_contributes_nothing():
    tau = wrist_torque(flat_hand(), single_load(50.0), one_taxel_map(landmark=0))
    assert tau == 0.0


def test_flexion_mode_takes_one_axis():
    m = one_taxel_map(offset=(0.0, 0.03, 0.0))
    hand, load = flat_hand(), single_load(10.0)
    full = wrist_torque(hand, load, m)
    flex = wrist_torque(hand, load, m, "flexion")
    # lever (0.10, 0.03, 0) x (0, 0, -10): flexion component about hand y is 1.0
    assert flex == pytest.approx(1.0, abs=1e-12)
    assert full == pytest.approx(np.hypot(1.0, 0.3), abs=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.integers(0, 1000))
def test_translation_invariance(shift, seed):
    rng = np.random.default_rng(seed)
    lm = rng.normal(0, 0.05, (1, N_LANDMARKS, 3))
    n = rng.normal(size=(1, 3))
    n /= np.linalg.norm(n)
    w = lm[:, 0].copy()
    f = rng.uniform(0, 20, (1, N_TAXELS))
    a = torques(lm, n, w, f)
    b = torques(lm + shift, n, w + shift, f)
    assert b[0] == pytest.approx(a[0], abs=1e-9)


def test_side_mismatch():
    with pytest.raises(BachError):
        wrist_torque(flat_hand("left"), single_load(1.0, "right"))


def test_degenerate_normal():
    with pytest.raises(BachError, match="normal"):
        torques(np.zeros((1, N_LANDMARKS, 3)), np.zeros((1, 3)), np.zeros((1, 3)),
                np.ones((1, N_TAXELS)))


def test_unknown_mode():
    with pytest.raises(BachError):
        BachParams(torque_mode="twist")


# -- series -----------------------------------------------------------------------

def with_glove(trial, fn):
    streams = dict(trial.streams)
    for s in ("left", "right"):
        g = streams[("glove", s)]
        streams[("glove", s)] = SensorStream("glove", s, g.t, fn(g.values), g.native_rate, g.ceiling)
    return dataclasses.replace(trial, streams=streams)


def test_unit_frame():
    tau = np.array([1.0, 2.0, 3.0])
    score, med, _ = bach_scores(tau, np.full(3, THETA_PEAK))
    assert med == 2.0 and score[1] == 1.0


@pytest.mark.parametrize("c", [0.1, 1.0, 3.7, 100.0])
def test_scale_invariance(c):
    trial = synthetic_trial()
    base = bach_series(trial)
    scaled = bach_series(with_glove(trial, lambda v: v * c))
    for s in ("left", "right"):
        np.testing.assert_allclose(scaled.side(s), base.side(s), rtol=0, atol=1e-9)


def test_zero_force_trial_raises():
    with pytest.raises(UndefinedNormalizationError):
        bach_series(with_glove(synthetic_trial(), np.zeros_like))


def test_series_shape_and_diagnostics():
    trial = synthetic_trial()
    series, diag = bach_series(trial, with_diagnostics=True)
    assert len(series) == len(trial)
    for s in ("left", "right"):
        expected = diag.tau[s] / diag.tau_median[s] * alpha_wr(trial.values("gonio", s)[:, 0])
        np.testing.assert_allclose(series.side(s), expected, rtol=1e-12)
        assert np.median(diag.tau[s]) == diag.tau_median[s]
    rows = list(diag.rows(trial.t))
    assert len(rows) == len(trial) and len(rows[0]) == 8


def test_flexion_mode_never_exceeds_magnitude():
    trial = synthetic_trial()
    hand = trial.values("hand", "right")
    lm = hand[:, :63].reshape(-1, 21, 3)
    g = trial.values("glove", "right")
    full = torques(lm, hand[:, 63:66], hand[:, 66:69], g, default_taxel_map())
    flex = torques(lm, hand[:, 63:66], hand[:, 66:69], g, default_taxel_map(), "flexion")
    assert np.all(flex <= full + 1e-12)
    assert isinstance(trial, SyncedTrial)
