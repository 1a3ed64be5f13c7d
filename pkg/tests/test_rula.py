import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergorisk.errors import MissingJointError
from ergorisk.rula import (
    ArmAngles, RulaAdjustments, UpperBodyAngles, angle_arrays, default_tables, joint_angles,
    rula_frame_score, rula_series, score_from_subscores,
)
from ergorisk.streams import BODY_JOINTS, JOINT_INDEX, BodyPoseFrame, GonioSample
from helpers import RULA_CASES, synthetic_trial


@pytest.mark.parametrize("name,angles,side,expected", RULA_CASES, ids=[c[0] for c in RULA_CASES])
def test_worksheet_postures(name, angles, side, expected):
    assert rula_frame_score(angles, RulaAdjustments(), side).final == expected


def test_neutral_subscores():
    r = rula_frame_score(UpperBodyAngles(), RulaAdjustments())
    assert (r.score_a, r.score_b, r.score_c, r.score_d, r.final) == (1, 1, 4, 4, 4)


def test_straight_elbow_is_not_neutral():
    # a fully straight elbow falls in the <60 degree lower-arm band
    angles = UpperBodyAngles(right=ArmAngles(lower_arm_flexion=0.0))
    assert rula_frame_score(angles).score_a == 2


def test_adjustments_validated():
    with pytest.raises(ValueError):
        RulaAdjustments(muscle_use=2)


def test_final_always_in_range():
    tb = default_tables()
    grid = np.array(list(itertools.product(range(1, 7), range(1, 4), range(1, 5), range(1, 3),
                                           range(1, 7), range(1, 7), range(1, 3))))
    *_, final = score_from_subscores(*grid.T, 1, 2, tb)
    assert final.min() >= 1 and final.max() <= 7


def test_monotone_in_every_subscore():
    limits = (6, 3, 4, 2, 6, 6, 2)
    grid = np.array(list(itertools.product(*[range(1, m + 1) for m in limits])))
    base = score_from_subscores(*grid.T, 1, 2)[4]
    for i, lim in enumerate(limits):
        bumped = grid.copy()
        bumped[:, i] = np.minimum(bumped[:, i] + 1, lim)
        assert np.all(score_from_subscores(*bumped.T, 1, 2)[4] >= base)


@given(st.floats(-60, 150), st.floats(-60, 150))
def test_upper_arm_band_monotone_above_extension(a, b):
    tb = default_tables()
    lo, hi = sorted((a, b))
    if lo >= -20:
        assert tb.band_score("upper_arm", np.array(hi)) >= tb.band_score("upper_arm", np.array(lo))


# -- angles from a hand-built skeleton --------------------------------------------

def skeleton(arm_flex=0.0, elbow=0.0, trunk_lean=0.0, head_tilt=0.0):
    """Upright figure facing +y; angles in degrees, sagittal plane only."""
    lean = np.radians(trunk_lean)
    up = np.array([0.0, np.sin(lean), np.cos(lean)])
    hip = np.array([0.0, 0.0, 1.0])
    ms = hip + 0.5 * up
    J = {"mid_hip": hip, "mid_shoulder": ms,
         "left_hip": hip + [-0.12, 0, 0], "right_hip": hip + [0.12, 0, 0]}
    head_dir = np.array([0.0, np.sin(lean + np.radians(head_tilt)),
                         np.cos(lean + np.radians(head_tilt))])
    J["nose"] = ms + 0.25 * head_dir
    J["left_eye"] = J["nose"] + [-0.03, 0, 0]
    J["right_eye"] = J["nose"] + [0.03, 0, 0]
    a = np.radians(arm_flex)
    down = -up
    fwd = np.array([0.0, np.cos(lean), -np.sin(lean)])
    seg = np.cos(a) * down + np.sin(a) * fwd
    e = np.radians(elbow)
    fore = np.cos(a + e) * down + np.sin(a + e) * fwd
    for side, x in (("left", -0.2), ("right", 0.2)):
        sh = ms + [x, 0, 0]
        J[f"{side}_shoulder"] = sh
        J[f"{side}_elbow"] = sh + 0.3 * seg
        J[f"{side}_wrist"] = sh + 0.3 * seg + 0.25 * fore
    return BodyPoseFrame({k: np.asarray(v, dtype=float) for k, v in J.items()})


@given(st.floats(-40, 160), st.floats(5, 140), st.floats(0, 70), st.floats(0, 40))
def test_sagittal_angles_recovered(arm, elbow, lean, tilt):
    g = GonioSample("left", 12.0, 3.0)
    a = joint_angles(skeleton(arm, elbow, lean, tilt), g, GonioSample("right", -7.0, 20.0))
    assert a.right.upper_arm_flexion == pytest.approx(arm, abs=1e-6)
    assert a.right.lower_arm_flexion == pytest.approx(elbow, abs=1e-6)
    assert a.trunk_flexion == pytest.approx(lean, abs=1e-6)
    assert a.neck_flexion == pytest.approx(tilt, abs=1e-6)
    assert not a.right.upper_arm_abducted and not a.neck_twist_flag and not a.trunk_twist_flag
    assert a.left.wrist_flexion == 12.0 and a.right.wrist_flexion == -7.0
    assert a.right.wrist_deviation_flag and not a.left.wrist_deviation_flag


def test_missing_joint_raises():
    body = skeleton()
    joints = dict(body.joints)
    joints["right_elbow"] = np.full(3, np.nan)
    with pytest.raises(MissingJointError, match="right_elbow"):
        joint_angles(BodyPoseFrame(joints), GonioSample("left", 0, 0), GonioSample("right", 0, 0))


def test_degenerate_trunk_raises():
    J = np.zeros((1, len(BODY_JOINTS), 3))
    J[0, JOINT_INDEX["left_shoulder"]] = [-0.2, 0, 0]
    J[0, JOINT_INDEX["right_shoulder"]] = [0.2, 0, 0]
    with pytest.raises(MissingJointError):
        angle_arrays(J, {"left": np.zeros((1, 2)), "right": np.zeros((1, 2))})


def test_series_matches_frame_scores():
    trial = synthetic_trial()
    series = rula_series(trial)
    assert len(series) == len(trial)
    assert series.left.min() >= 1 and series.right.max() <= 7
    for k in (0, 250, len(trial) - 1):
        rec = trial.record(k)
        a = joint_angles(rec.body, rec.gonio["left"], rec.gonio["right"])
        assert rula_frame_score(a, side="left").final == series.left[k]
        assert rula_frame_score(a, side="right").final == series.right[k]


@pytest.mark.parametrize("angle,flag", [(20.0, False), (60.0, True), (100.0, True)])
def test_lateral_raise_flags_abduction(angle, flag):
    body = skeleton()
    joints = dict(body.joints)
    sh = joints["right_shoulder"]
    a = np.radians(angle)
    joints["right_elbow"] = sh + 0.3 * np.array([np.sin(a), 0.0, -np.cos(a)])
    joints["right_wrist"] = joints["right_elbow"] + [0.0, 0.25, 0.0]
    got = joint_angles(BodyPoseFrame(joints), GonioSample("left", 0, 0), GonioSample("right", 0, 0))
    assert got.right.upper_arm_abducted is flag
    assert not got.left.upper_arm_abducted


def test_neutral_without_adjustments():
    r = rula_frame_score(UpperBodyAngles(), RulaAdjustments(0, 0, 1))
    assert (r.score_c, r.score_d, r.final) == (1, 1, 1)
