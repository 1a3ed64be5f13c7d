"""Per-frame RULA scoring from 3D body pose and goniometer wrist angles.

Angle extraction and band scoring are vectorized over frames; the per-frame
functions run the same code on single-row arrays.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import MissingJointError
from .series import ScoreSeries
from .streams import BODY_JOINTS, JOINT_INDEX, REQUIRED_JOINTS, SIDES, BodyPoseFrame, GonioSample

ARM_FIELDS = ("upper_arm_flexion", "shoulder_raised", "upper_arm_abducted",
              "lower_arm_flexion", "lower_arm_cross_midline", "wrist_flexion",
              "wrist_deviation_flag", "wrist_twist_score")
SHARED_FIELDS = ("neck_flexion", "neck_twist_flag", "trunk_flexion", "trunk_twist_flag")
FEATURES = ARM_FIELDS + SHARED_FIELDS


@dataclass(frozen=True)
class RulaAdjustments:
    muscle_use: int = 1
    force_load: int = 2
    leg_score: int = 1

    def __post_init__(self):
        if self.muscle_use not in (0, 1) or self.force_load not in (0, 1, 2, 3) \
                or self.leg_score not in (1, 2):
            raise ValueError(f"RULA adjustments out of range: {self}")


@dataclass(frozen=True)
class RulaGeometry:
    """How flags are read off the pose; thresholds in degrees or metres."""

    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    wrist_deviation_threshold: float = 15.0
    wrist_twist_score: int = 1
    shoulder_raise_threshold: float = 0.05
    abduction_threshold: float = 45.0
    out_to_side_margin: float = 0.15
    neck_twist_threshold: float = 20.0
    trunk_twist_threshold: float = 10.0


@dataclass(frozen=True)
class ArmAngles:
    upper_arm_flexion: float = 0.0
    shoulder_raised: bool = False
    upper_arm_abducted: bool = False
    lower_arm_flexion: float = 80.0
    lower_arm_cross_midline: bool = False
    wrist_flexion: float = 0.0
    wrist_deviation_flag: bool = False
    wrist_twist_score: int = 1


@dataclass(frozen=True)
class UpperBodyAngles:
    left: ArmAngles = field(default_factory=ArmAngles)
    right: ArmAngles = field(default_factory=ArmAngles)
    neck_flexion: float = 0.0
    neck_twist_flag: bool = False
    trunk_flexion: float = 0.0
    trunk_twist_flag: bool = False

    def arm(self, side: str) -> ArmAngles:
        return self.left if side == "left" else self.right

    def features(self, side: str) -> np.ndarray:
        arm = asdict(self.arm(side))
        return np.array([float(arm[f]) for f in ARM_FIELDS]
                        + [float(getattr(self, f)) for f in SHARED_FIELDS])


@dataclass(frozen=True)
class RulaResult:
    side: str
    score_a: int
    score_b: int
    score_c: int
    score_d: int
    final: int


# -- tables -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RulaTables:
    bands: dict
    limits: dict
    table_a: np.ndarray
    table_b: np.ndarray
    table_c: np.ndarray

    @classmethod
    def from_dict(cls, d: dict) -> "RulaTables":
        return cls(d["bands"], d["limits"], np.array(d["table_a"]),
                   np.array(d["table_b"]), np.array(d["table_c"]))

    @classmethod
    def load(cls, path: str | Path) -> "RulaTables":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def band_score(self, name: str, angle: np.ndarray) -> np.ndarray:
        spec = self.bands[name]
        a = np.abs(angle) if spec["abs"] else np.asarray(angle, dtype=float)
        out = np.zeros(np.shape(a), dtype=int)
        for lo, hi, score in spec["bands"]:
            m = np.ones(np.shape(a), dtype=bool)
            if lo is not None:
                m &= a >= lo
            if hi is not None:
                m &= a < hi
            out = np.where(m, score, out)
        return out


@lru_cache(maxsize=1)
def default_tables() -> RulaTables:
    text = resources.files("ergorisk").joinpath("data/rula_tables.json").read_text()
    return RulaTables.from_dict(json.loads(text))


def score_from_subscores(upper_arm, lower_arm, wrist, wrist_twist, neck, trunk, legs,
                         muscle_use, force_load, tables: RulaTables | None = None):
    """Table A/B/C walk from (possibly out-of-range) sub-scores.

    Returns ``(score_a, score_b, score_c, score_d, final)``; array inputs broadcast.
    """
    tb = tables or default_tables()
    lim = tb.limits

    def clip(x, hi):
        return np.clip(np.asarray(x, dtype=int), 1, hi)

    a = tb.table_a[clip(upper_arm, lim["upper_arm"]) - 1, clip(lower_arm, lim["lower_arm"]) - 1,
                   clip(wrist, lim["wrist"]) - 1, clip(wrist_twist, lim["wrist_twist"]) - 1]
    b = tb.table_b[clip(neck, lim["neck"]) - 1, clip(trunk, lim["trunk"]) - 1,
                   clip(legs, lim["legs"]) - 1]
    c = a + muscle_use + force_load
    d = b + muscle_use + force_load
    final = tb.table_c[clip(c, lim["score_c"]) - 1, clip(d, lim["score_d"]) - 1]
    return a, b, c, d, final


# -- angle extraction -----------------------------------------------------------

def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # atan2 keeps full precision near 0 and 180 degrees, unlike arccos
    u, v = np.broadcast_arrays(u, v)
    return np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), np.sum(u * v, axis=-1)))


def _plane_angle(u: np.ndarray, v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Unsigned angle between the lines u and v projected onto the plane normal to axis."""
    pu = u - np.sum(u * axis, axis=-1, keepdims=True) * axis
    pv = v - np.sum(v * axis, axis=-1, keepdims=True) * axis
    a = _angle(pu, pv)
    return np.minimum(a, 180.0 - a)


def angle_arrays(joints: np.ndarray, gonio: dict[str, np.ndarray],
                 geometry: RulaGeometry | None = None) -> dict[str, np.ndarray]:
    """Vectorized angle extraction.

    ``joints`` is ``(N, n_joints, 3)`` in BODY_JOINTS order and ``gonio`` maps
    side to ``(N, 2)`` channel arrays. Keys of the result are the shared fields
    plus ``"<side>.<arm field>"``.
    """
    g = geometry or RulaGeometry()
    J = np.asarray(joints, dtype=float)
    missing = [j for j in REQUIRED_JOINTS if not np.all(np.isfinite(J[:, JOINT_INDEX[j]]))]
    if missing:
        raise MissingJointError(f"missing joints: {', '.join(missing)}")

    def P(name):
        return J[:, JOINT_INDEX[name]]

    up = np.asarray(g.up, dtype=float)
    up = up / np.linalg.norm(up)
    trunk = P("mid_shoulder") - P("mid_hip")
    tlen = np.linalg.norm(trunk, axis=1)
    if np.any(tlen < 1e-9):
        raise MissingJointError("degenerate trunk: mid_hip coincides with mid_shoulder")
    tu = trunk / tlen[:, None]
    lat = P("right_shoulder") - P("left_shoulder")
    if np.any(np.linalg.norm(lat, axis=1) < 1e-9):
        raise MissingJointError("degenerate shoulders: left and right coincide")
    lat_u = _unit(lat - np.sum(lat * tu, axis=1, keepdims=True) * tu)
    fwd = np.cross(tu, lat_u)
    half_width = 0.5 * np.linalg.norm(lat, axis=1)

    out: dict[str, np.ndarray] = {
        "trunk_flexion": _angle(trunk, np.broadcast_to(up, trunk.shape)),
        "neck_flexion": _angle(P("nose") - P("mid_shoulder"), trunk),
        "neck_twist_flag": _plane_angle(P("right_eye") - P("left_eye"), lat, tu) > g.neck_twist_threshold,
        "trunk_twist_flag": _plane_angle(lat, P("right_hip") - P("left_hip"), tu) > g.trunk_twist_threshold,
    }
    for side, sign in (("left", -1.0), ("right", 1.0)):
        sh, el, wr = P(f"{side}_shoulder"), P(f"{side}_elbow"), P(f"{side}_wrist")
        v = el - sh
        flex = _angle(v, -trunk)
        flex = np.where(np.sum(v * fwd, axis=1) < 0, -flex, flex)
        outward = sign * np.sum(v * lat_u, axis=1)
        # elevation of the upper arm out of the sagittal plane, toward its own side
        abd = np.degrees(np.arcsin(np.clip(outward / np.linalg.norm(v, axis=1), -1.0, 1.0)))
        raised = np.sum((sh - P("mid_shoulder")) * tu, axis=1) > g.shoulder_raise_threshold
        lateral = sign * np.sum((wr - P("mid_shoulder")) * lat_u, axis=1)
        ch = np.asarray(gonio[side], dtype=float).reshape(-1, 2)
        out.update({
            f"{side}.upper_arm_flexion": flex,
            f"{side}.shoulder_raised": raised,
            f"{side}.upper_arm_abducted": abd > g.abduction_threshold,
            f"{side}.lower_arm_flexion": _angle(wr - el, v),
            f"{side}.lower_arm_cross_midline": (lateral < 0) | (lateral > half_width + g.out_to_side_margin),
            f"{side}.wrist_flexion": ch[:, 0],
            f"{side}.wrist_deviation_flag": np.abs(ch[:, 1]) >= g.wrist_deviation_threshold,
            f"{side}.wrist_twist_score": np.full(J.shape[0], g.wrist_twist_score),
        })
    return out


def joint_angles(body: BodyPoseFrame, gonio_left: GonioSample, gonio_right: GonioSample,
                 geometry: RulaGeometry | None = None) -> UpperBodyAngles:
    missing = body.missing()
    if missing:
        raise MissingJointError(f"missing joints: {', '.join(missing)}")
    J = np.full((1, len(BODY_JOINTS), 3), np.nan)
    for name, xyz in body.joints.items():
        J[0, JOINT_INDEX[name]] = xyz
    gon = {"left": np.array([[gonio_left.ch1, gonio_left.ch2]]),
           "right": np.array([[gonio_right.ch1, gonio_right.ch2]])}
    a = angle_arrays(J, gon, geometry)
    return angles_at(a, 0)


def angles_at(a: dict[str, np.ndarray], k: int) -> UpperBodyAngles:
    def arm(side):
        vals = {f: a[f"{side}.{f}"][k] for f in ARM_FIELDS}
        return ArmAngles(
            upper_arm_flexion=float(vals["upper_arm_flexion"]),
            shoulder_raised=bool(vals["shoulder_raised"]),
            upper_arm_abducted=bool(vals["upper_arm_abducted"]),
            lower_arm_flexion=float(vals["lower_arm_flexion"]),
            lower_arm_cross_midline=bool(vals["lower_arm_cross_midline"]),
            wrist_flexion=float(vals["wrist_flexion"]),
            wrist_deviation_flag=bool(vals["wrist_deviation_flag"]),
            wrist_twist_score=int(vals["wrist_twist_score"]),
        )
    return UpperBodyAngles(arm("left"), arm("right"),
                           float(a["neck_flexion"][k]), bool(a["neck_twist_flag"][k]),
                           float(a["trunk_flexion"][k]), bool(a["trunk_twist_flag"][k]))


def to_arrays(angles: UpperBodyAngles) -> dict[str, np.ndarray]:
    out = {f: np.array([getattr(angles, f)]) for f in SHARED_FIELDS}
    for side in SIDES:
        arm = angles.arm(side)
        for f in ARM_FIELDS:
            out[f"{side}.{f}"] = np.array([getattr(arm, f)])
    return out


# -- scoring --------------------------------------------------------------------

def score_arrays(a: dict[str, np.ndarray], adj: RulaAdjustments, side: str,
                 tables: RulaTables | None = None):
    tb = tables or default_tables()
    p = f"{side}."
    upper = (tb.band_score("upper_arm", a[p + "upper_arm_flexion"])
             + a[p + "shoulder_raised"].astype(int) + a[p + "upper_arm_abducted"].astype(int))
    lower = tb.band_score("lower_arm", a[p + "lower_arm_flexion"]) \
        + a[p + "lower_arm_cross_midline"].astype(int)
    wrist = tb.band_score("wrist", a[p + "wrist_flexion"]) + a[p + "wrist_deviation_flag"].astype(int)
    twist = np.asarray(a[p + "wrist_twist_score"], dtype=int)
    neck = tb.band_score("neck", a["neck_flexion"]) + a["neck_twist_flag"].astype(int)
    trunk = tb.band_score("trunk", a["trunk_flexion"]) + a["trunk_twist_flag"].astype(int)
    return score_from_subscores(upper, lower, wrist, twist, neck, trunk, adj.leg_score,
                                adj.muscle_use, adj.force_load, tb)


def rula_frame_score(angles: UpperBodyAngles, adj: RulaAdjustments | None = None,
                     side: str = "right", tables: RulaTables | None = None) -> RulaResult:
    adj = adj or RulaAdjustments()
    a, b, c, d, final = score_arrays(to_arrays(angles), adj, side, tables)
    return RulaResult(side, int(a[0]), int(b[0]), int(c[0]), int(d[0]), int(final[0]))


def trial_angles(trial, geometry: RulaGeometry | None = None) -> dict[str, np.ndarray]:
    J = trial.values("body").reshape(len(trial), -1, 3)
    gon = {s: trial.values("gonio", s) for s in SIDES}
    return angle_arrays(J, gon, geometry)


def feature_matrix(a: dict[str, np.ndarray], side: str) -> np.ndarray:
    cols = [a[f"{side}.{f}"] for f in ARM_FIELDS] + [a[f] for f in SHARED_FIELDS]
    return np.column_stack([np.asarray(c, dtype=float) for c in cols])


def rula_series(trial, adj: RulaAdjustments | None = None,
                geometry: RulaGeometry | None = None, tables: RulaTables | None = None):
    """Integer RULA score per tick for each side."""
    adj = adj or RulaAdjustments()
    if len(trial) == 0:
        empty = np.zeros(0, dtype=int)
        return ScoreSeries("rula", trial.t, empty, empty)
    a = trial_angles(trial, geometry)
    finals = {s: score_arrays(a, adj, s, tables)[4].astype(int) for s in SIDES}
    return ScoreSeries("rula", trial.t, finals["left"], finals["right"])
