"""Synthetic trials: kinematically consistent body/hand poses, goniometer
angles and glove forces driven by a small set of motion primitives.

Everything is a pure function of ``(ScenarioSpec, seed)``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .streams import (
    BODY_JOINTS, DEFAULT_CEILING, JOINT_INDEX, N_TAXELS, SIDES, TOOLS,
    SensorStream, TrialBundle,
)
from .taxels import DIGIT_LANDMARKS, FINGERS, TaxelMap, default_taxel_map

PRIMITIVES = ("pinch", "smooth", "press", "constant", "rest")


@dataclass(frozen=True)
class MotionSegment:
    kind: str
    start: float
    end: float
    hands: str = "both"
    fingers: tuple[str, ...] = ("thumb", "index")
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIMITIVES:
            raise ScenarioError(f"unknown motion primitive {self.kind!r}")
        if self.hands not in ("left", "right", "both"):
            raise ScenarioError(f"hands must be left, right or both, got {self.hands!r}")
        if self.end <= self.start:
            raise ScenarioError(f"segment {self.kind}: end must exceed start")
        if self.period <= 0 or self.amplitude < 0:
            raise ScenarioError(f"segment {self.kind}: need period > 0 and amplitude >= 0")
        bad = set(self.fingers) - set(FINGERS[:5])
        if bad:
            raise ScenarioError(f"unknown fingers {sorted(bad)}")

    def applies_to(self, side: str) -> bool:
        return self.hands in (side, "both")

    def waveform(self, t: np.ndarray) -> np.ndarray:
        """Per-finger force (N) at times *t*; zero outside the segment."""
        phase = 2 * np.pi * (t - self.start) / self.period
        if self.kind in ("pinch", "press"):
            f = self.amplitude * 0.5 * (1.0 - np.cos(phase))
        elif self.kind == "smooth":
            f = self.amplitude * (0.75 + 0.25 * np.sin(phase))
        elif self.kind == "constant":
            f = np.full_like(t, self.amplitude)
        else:
            f = np.zeros_like(t)
        return np.where((t >= self.start) & (t < self.end), f, 0.0)


@dataclass(frozen=True)
class ScenarioSpec:
    duration: float
    participant_id: str = "P1"
    tool: str = "stringer"
    body_rate: float = 60.0
    hand_rate: float = 90.0
    gonio_rate: float = 50.0
    glove_rate: float = 25.0
    t0: float = 0.0
    start_jitter: float = 0.0
    saturation_ceiling: float = DEFAULT_CEILING
    body_scale: float = 1.0
    force_scale: float = 1.0
    force_noise: float = 0.0
    pose_noise: float = 0.0
    gonio_noise: float = 0.0
    # posture, degrees
    trunk_flexion: float = 5.0
    neck_flexion: float = 5.0
    upper_arm_flexion: float = 10.0
    elbow_flexion: float = 80.0
    wrist_flexion: float = 0.0
    wrist_deviation: float = 0.0
    posture_sway: float = 0.0
    posture_period: float = 8.0
    wrist_sway: float = 0.0
    wrist_period: float = 3.0
    segments: tuple[MotionSegment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        for name in ("body_rate", "hand_rate", "gonio_rate", "glove_rate",
                     "posture_period", "wrist_period", "body_scale",
                     "saturation_ceiling"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        if self.tool not in TOOLS:
            raise ScenarioError(f"unknown tool {self.tool!r}")
        if self.start_jitter < 0 or self.start_jitter >= self.duration / 2:
            raise ScenarioError("start_jitter must lie in [0, duration/2)")

    @property
    def rates(self) -> dict[str, float]:
        return {"body": self.body_rate, "hand": self.hand_rate,
                "gonio": self.gonio_rate, "glove": self.glove_rate}


# -- config parsing -----------------------------------------------------------

_SCALAR_FIELDS = {f.name: f.type for f in fields(ScenarioSpec) if f.name != "segments"}


def scenario_from_parser(cp: configparser.ConfigParser) -> ScenarioSpec:
    if not cp.has_section("scenario"):
        raise ScenarioError("scenario config needs a [scenario] section")
    kwargs: dict = {}
    for key, raw in cp.items("scenario"):
        if key not in _SCALAR_FIELDS:
            raise ScenarioError(f"unknown scenario key {key!r}")
        kwargs[key] = raw if key in ("participant_id", "tool") else _float(key, raw)
    if "duration" not in kwargs:
        raise ScenarioError("scenario needs a duration")
    segments = []
    for section in cp.sections():
        if not section.startswith("segment"):
            continue
        sec = dict(cp.items(section))
        try:
            fingers = tuple(f.strip() for f in sec.pop("fingers", "thumb,index").split(",") if f.strip())
            seg = MotionSegment(
                kind=sec.pop("kind"),
                start=_float("start", sec.pop("start")),
                end=_float("end", sec.pop("end")),
                hands=sec.pop("hands", "both"),
                fingers=fingers,
                amplitude=_float("amplitude", sec.pop("amplitude", "0")),
                period=_float("period", sec.pop("period", "1")),
            )
        except KeyError as exc:
            raise ScenarioError(f"[{section}] lacks {exc.args[0]!r}") from None
        if sec:
            raise ScenarioError(f"[{section}] has unknown keys {sorted(sec)}")
        segments.append(seg)
    return ScenarioSpec(segments=tuple(segments), **kwargs)


def _float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"{key}: expected a number, got {raw!r}") from None


def load_scenario(path: str | Path) -> ScenarioSpec:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file") from None
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_parser(cp)


# -- kinematics ---------------------------------------------------------------

@dataclass(frozen=True)
class _Sway:
    """Sum of two incommensurate sinusoids with seeded phases, range about [-1, 1]."""

    phase1: float
    phase2: float
    period: float

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return (0.6 * np.sin(2 * np.pi * t / self.period + self.phase1)
                + 0.4 * np.sin(2 * np.pi * t / (1.618 * self.period) + self.phase2))


class _Kinematics:
    def __init__(self, spec: ScenarioSpec, rng: np.random.Generator):
        self.spec = spec
        names = ["trunk", "neck", "arm_left", "arm_right", "elbow_left", "elbow_right",
                 "wflex_left", "wflex_right", "wdev_left", "wdev_right"]
        phases = rng.uniform(0, 2 * np.pi, size=(len(names), 2))
        self.sway = {}
        for name, (p1, p2) in zip(names, phases):
            period = spec.wrist_period if name.startswith("w") else spec.posture_period
            self.sway[name] = _Sway(p1, p2, period)

    def angles(self, t: np.ndarray) -> dict[str, np.ndarray]:
        s = self.spec
        tt = t - s.t0
        a = {
            "trunk": np.abs(s.trunk_flexion + 0.5 * s.posture_sway * self.sway["trunk"](tt)),
            "neck": s.neck_flexion + 0.6 * s.posture_sway * self.sway["neck"](tt),
        }
        for side in SIDES:
            a[f"arm_{side}"] = s.upper_arm_flexion + s.posture_sway * self.sway[f"arm_{side}"](tt)
            a[f"elbow_{side}"] = s.elbow_flexion + s.posture_sway * self.sway[f"elbow_{side}"](tt)
            a[f"wflex_{side}"] = s.wrist_flexion + s.wrist_sway * self.sway[f"wflex_{side}"](tt)
            a[f"wdev_{side}"] = s.wrist_deviation + 0.6 * s.wrist_sway * self.sway[f"wdev_{side}"](tt)
        return a

    def skeleton(self, t: np.ndarray) -> tuple[np.ndarray, dict, dict[str, np.ndarray]]:
        """Joint positions (N, len(BODY_JOINTS), 3), forearm directions per side, angles."""
        s = self.spec
        k = s.body_scale
        ang = self.angles(t)
        n = t.size
        lat = np.array([1.0, 0.0, 0.0])
        a = np.radians(ang["trunk"])
        up = np.stack([np.zeros(n), np.sin(a), np.cos(a)], axis=1)
        fwd = np.stack([np.zeros(n), np.cos(a), -np.sin(a)], axis=1)
        J = np.full((n, len(BODY_JOINTS), 3), np.nan)

        def put(name, v):
            J[:, JOINT_INDEX[name]] = v

        mid_hip = np.tile([0.0, 0.0, 1.0 * k], (n, 1))
        put("mid_hip", mid_hip)
        put("left_hip", mid_hip - 0.15 * k * lat)
        put("right_hip", mid_hip + 0.15 * k * lat)
        put("left_knee", mid_hip + [-0.1 * k, 0.05 * k, -0.5 * k])
        put("right_knee", mid_hip + [0.1 * k, 0.05 * k, -0.5 * k])
        put("left_ankle", mid_hip + [-0.1 * k, 0.0, -0.92 * k])
        put("right_ankle", mid_hip + [0.1 * k, 0.0, -0.92 * k])
        mid_sh = mid_hip + 0.5 * k * up
        put("mid_shoulder", mid_sh)
        g = np.radians(ang["trunk"] + ang["neck"])
        head = np.stack([np.zeros(n), np.sin(g), np.cos(g)], axis=1)
        nose = mid_sh + 0.25 * k * head
        put("nose", nose)
        put("left_eye", nose - 0.03 * k * lat + 0.03 * k * head)
        put("right_eye", nose + 0.03 * k * lat + 0.03 * k * head)
        put("left_ear", nose - 0.07 * k * lat)
        put("right_ear", nose + 0.07 * k * lat)
        forearm = {}
        for side, sign in (("left", -1.0), ("right", 1.0)):
            shoulder = mid_sh + sign * 0.19 * k * lat
            b = np.radians(ang[f"arm_{side}"])[:, None]
            d1 = -np.cos(b) * up + np.sin(b) * fwd
            e = b + np.radians(ang[f"elbow_{side}"])[:, None]
            d2 = -np.cos(e) * up + np.sin(e) * fwd
            elbow = shoulder + 0.30 * k * d1
            wrist = elbow + 0.27 * k * d2
            put(f"{side}_shoulder", shoulder)
            put(f"{side}_elbow", elbow)
            put(f"{side}_wrist", wrist)
            forearm[side] = d2
        return J, forearm, ang


# Hand landmarks in hand-local (x toward fingers, y = normal x x) coordinates for
# a right hand; the left hand mirrors y.
def _local_hand(scale: float) -> np.ndarray:
    pts = np.zeros((21, 2))
    pts[1:5] = [(0.025, -0.03), (0.045, -0.05), (0.065, -0.065), (0.085, -0.075)]
    bases = {"index": (0.085, -0.02), "middle": (0.09, 0.0),
             "ring": (0.085, 0.02), "little": (0.075, 0.038)}
    for name, (x0, y0) in bases.items():
        lms = DIGIT_LANDMARKS[name]
        xs = x0 + np.cumsum([0.0, 0.04, 0.025, 0.02])
        for lm, x in zip(lms, xs):
            pts[lm] = (x, y0)
    return scale * pts


def _hand_pose(wrist: np.ndarray, forearm: np.ndarray, theta: np.ndarray,
               dev: np.ndarray, side: str, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Landmarks (N, 21, 3) and palm normals (N, 3) from wrist angles in degrees."""
    lat = np.array([1.0, 0.0, 0.0])
    x0 = forearm / np.linalg.norm(forearm, axis=1, keepdims=True)
    n0 = np.cross(x0, lat)
    n0 /= np.linalg.norm(n0, axis=1, keepdims=True)
    th = np.radians(theta)[:, None]
    # flexion swings the fingers toward the palm side
    x1 = np.cos(th) * x0 + np.sin(th) * n0
    n1 = np.cos(th) * n0 - np.sin(th) * x0
    y1 = np.cross(n1, x1)
    de = np.radians(dev)[:, None]
    x = np.cos(de) * x1 + np.sin(de) * y1
    y = np.cross(n1, x)
    local = _local_hand(scale)
    if side == "left":
        local = local * [1.0, -1.0]
    lms = wrist[:, None, :] + local[None, :, 0:1] * x[:, None, :] + local[None, :, 1:2] * y[:, None, :]
    return lms, n1 / np.linalg.norm(n1, axis=1, keepdims=True)


def _sample_times(spec: ScenarioSpec, rate: float, rng: np.random.Generator) -> np.ndarray:
    lead = rng.uniform(0, spec.start_jitter) if spec.start_jitter else 0.0
    tail = rng.uniform(0, spec.start_jitter) if spec.start_jitter else 0.0
    n = int(np.floor((spec.duration - lead - tail) * rate + 1e-9)) + 1
    return spec.t0 + lead + np.arange(n) / rate


def _segment_clock(spec: ScenarioSpec, t: np.ndarray) -> np.ndarray:
    """Time since trial start; the closing sample at ``duration`` belongs to the last segment."""
    return np.minimum(t - spec.t0, np.nextafter(spec.duration, 0.0))


def finger_force_profile(spec: ScenarioSpec, t: np.ndarray, side: str) -> dict[str, np.ndarray]:
    """Noise-free per-finger force (N) for one hand, before scaling and saturation."""
    out = {f: np.zeros_like(t) for f in FINGERS[:5]}
    tt = _segment_clock(spec, t)
    for seg in spec.segments:
        if not seg.applies_to(side) or seg.kind == "rest":
            continue
        w = seg.waveform(tt)
        for f in seg.fingers:
            out[f] = out[f] + w
    return out


def generate_synthetic_trial(spec: ScenarioSpec, seed: int,
                             taxel_map: TaxelMap | None = None) -> TrialBundle:
    """Build a complete bundle (body, both hands, goniometers, gloves) for *spec*."""
    if not isinstance(spec, ScenarioSpec):
        raise ScenarioError("spec must be a ScenarioSpec")
    taxel_map = taxel_map or default_taxel_map()
    rng = np.random.Generator(np.random.PCG64(seed))
    kin = _Kinematics(spec, rng)
    times = {kind: _sample_times(spec, rate, rng) for kind, rate in spec.rates.items()}
    streams: dict = {}

    tb = times["body"]
    J, _, _ = kin.skeleton(tb)
    if spec.pose_noise:
        J = J + rng.normal(0, spec.pose_noise, J.shape)
        J[:, JOINT_INDEX["mid_shoulder"]] = 0.5 * (J[:, JOINT_INDEX["left_shoulder"]]
                                                   + J[:, JOINT_INDEX["right_shoulder"]])
        J[:, JOINT_INDEX["mid_hip"]] = 0.5 * (J[:, JOINT_INDEX["left_hip"]]
                                              + J[:, JOINT_INDEX["right_hip"]])
    streams[("body", None)] = SensorStream("body", None, tb, J.reshape(tb.size, -1), spec.body_rate)

    th = times["hand"]
    Jh, forearm, ang = kin.skeleton(th)
    for side in SIDES:
        wrist = Jh[:, JOINT_INDEX[f"{side}_wrist"]]
        lms, normal = _hand_pose(wrist, forearm[side], ang[f"wflex_{side}"],
                                 ang[f"wdev_{side}"], side, spec.body_scale)
        if spec.pose_noise:
            lms = lms + rng.normal(0, spec.pose_noise, lms.shape)
            lms[:, 0] = wrist
        values = np.concatenate([lms.reshape(th.size, -1), normal, wrist], axis=1)
        streams[("hand", side)] = SensorStream("hand", side, th, values, spec.hand_rate)

    tg = times["gonio"]
    ang_g = kin.angles(tg)
    for side in SIDES:
        ch = np.stack([ang_g[f"wflex_{side}"], ang_g[f"wdev_{side}"]], axis=1)
        if spec.gonio_noise:
            ch = ch + rng.normal(0, spec.gonio_noise, ch.shape)
        ch[:, 0] = np.clip(ch[:, 0], -120, 120)
        ch[:, 1] = np.clip(ch[:, 1], -90, 90)
        streams[("gonio", side)] = SensorStream("gonio", side, tg, ch, spec.gonio_rate)

    tf = times["glove"]
    for side in SIDES:
        forces = np.zeros((tf.size, N_TAXELS))
        for seg in spec.segments:
            if not seg.applies_to(side) or seg.kind == "rest":
                continue
            w = seg.waveform(_segment_clock(spec, tf))
            for f in seg.fingers:
                idx = taxel_map.taxels_of(f) if seg.kind == "press" else taxel_map.fingertip_taxels(f)
                forces[:, idx] += (w / idx.size)[:, None]
        forces *= spec.force_scale
        if spec.force_noise:
            forces = forces + np.abs(rng.normal(0, spec.force_noise, forces.shape))
        forces = np.clip(forces, 0.0, spec.saturation_ceiling)
        streams[("glove", side)] = SensorStream("glove", side, tf, forces, spec.glove_rate,
                                                spec.saturation_ceiling)
    return TrialBundle(spec.participant_id, spec.tool, streams)


# -- stock scenarios ----------------------------------------------------------

def participant_scenario(participant_id: str, tool: str, duration: float = 60.0,
                         seed: int = 0) -> ScenarioSpec:
    """A layup-like trial: pinch, smooth, press and rest blocks with per-participant
    posture, strength and timing differences drawn from *seed*."""
    rng = np.random.Generator(np.random.PCG64(seed))
    blocks = []
    t = 0.0
    kinds = ["pinch", "smooth", "press", "rest", "pinch", "constant", "smooth", "press", "rest"]
    if tool == "convex_mold":
        kinds = ["smooth", "press", "pinch", "rest", "smooth", "pinch", "press", "constant", "rest"]
    i = 0
    while t < duration:
        kind = kinds[i % len(kinds)]
        length = float(rng.uniform(6.0, 14.0))
        end = min(t + length, duration)
        hands = ("right", "both", "right", "left")[int(rng.integers(0, 4))]
        if kind == "pinch":
            seg = MotionSegment("pinch", t, end, hands, ("thumb", "index"),
                                float(rng.uniform(18, 26)), float(rng.uniform(0.4, 0.9)))
        elif kind == "smooth":
            seg = MotionSegment("smooth", t, end, hands, ("index", "middle"),
                                float(rng.uniform(3, 8)), float(rng.uniform(1.0, 2.0)))
        elif kind == "press":
            seg = MotionSegment("press", t, end, hands, ("index", "middle", "ring", "little"),
                                float(rng.uniform(12, 20)), float(rng.uniform(3.0, 6.0)))
        elif kind == "constant":
            seg = MotionSegment("constant", t, end, hands, ("index",),
                                float(rng.uniform(16, 22)))
        else:
            seg = MotionSegment("rest", t, end, hands)
        blocks.append(seg)
        t = end
        i += 1
    posture = {
        "trunk_flexion": float(rng.uniform(5, 20)),
        "neck_flexion": float(rng.uniform(5, 20)),
        "upper_arm_flexion": float(rng.uniform(25, 55)),
        "elbow_flexion": float(rng.uniform(60, 90)),
        "wrist_flexion": float(rng.uniform(-10, 10)),
        "wrist_deviation": float(rng.uniform(-5, 5)),
    }
    return ScenarioSpec(
        duration=duration, participant_id=participant_id, tool=tool,
        body_scale=float(rng.uniform(0.92, 1.08)), force_scale=float(rng.uniform(0.9, 1.1)),
        force_noise=0.2, pose_noise=0.002, gonio_noise=0.5,
        posture_sway=float(rng.uniform(15, 25)), posture_period=float(rng.uniform(6, 12)),
        wrist_sway=float(rng.uniform(15, 25)), wrist_period=float(rng.uniform(2, 4)),
        segments=tuple(blocks), **posture,
    )


def with_forces_scaled(spec: ScenarioSpec, c: float) -> ScenarioSpec:
    return replace(spec, force_scale=spec.force_scale * c)
