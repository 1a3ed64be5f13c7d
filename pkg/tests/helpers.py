"""Independent oracles and fixtures shared by the test modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ergorisk.rula import ArmAngles, UpperBodyAngles
from ergorisk.streams import SensorStream, TrialBundle, n_channels
from ergorisk.sync import synchronize
from ergorisk.synth import generate_synthetic_trial, participant_scenario

# -- RULA postures scored by hand on the worksheet -----------------------------
# Muscle use +1 and force/load +2 land on both score C and score D; legs = 1.
# Each comment walks: upper, lower, wrist, twist -> table A; neck, trunk -> table B;
# then table C at (A + 3, B + 3) capped to (8, 7).


def _arm(**kw) -> ArmAngles:
    return ArmAngles(**kw)


def _post(side="right", arm=None, **kw) -> UpperBodyAngles:
    arm = arm or ArmAngles()
    if side == "right":
        return UpperBodyAngles(right=arm, **kw)
    return UpperBodyAngles(left=arm, **kw)


RULA_CASES = [
    # U1 L1 W1 T1 -> A1; N1 K1 -> B1; C[4][4] = 4
    ("neutral", _post(), "right", 4),
    # U2 L1 W2 T1 -> A3; N2 K2 -> B2; C[6][5] = 6
    ("reach_moderate", _post(arm=_arm(upper_arm_flexion=30, lower_arm_flexion=80, wrist_flexion=10),
                             neck_flexion=15, trunk_flexion=15), "right", 6),
    # U3 L2 W3 T1 -> A4; N3 K3 -> B4; C[7][7] = 7
    ("stooped_reach", _post(arm=_arm(upper_arm_flexion=50, lower_arm_flexion=110, wrist_flexion=20),
                            neck_flexion=25, trunk_flexion=30), "right", 7),
    # U4 L2 W1 T1 -> A4; B1; C[7][4] = 6
    ("overhead", _post(arm=_arm(upper_arm_flexion=100, lower_arm_flexion=50)), "right", 6),
    # U2 (extension) L1 W1 -> A2; neck extension N4 K1 -> B5; C[5][8->7] = 7
    ("arm_back_neck_up", _post(arm=_arm(upper_arm_flexion=-30, wrist_flexion=3),
                               neck_flexion=-5), "right", 7),
    # U1+raised=2 L1 W2 -> A3; N2 K3 -> B4; C[6][7] = 7
    ("shrug_bent_trunk", _post(arm=_arm(upper_arm_flexion=10, shoulder_raised=True,
                                        lower_arm_flexion=70, wrist_flexion=-8),
                               neck_flexion=12, trunk_flexion=25), "right", 7),
    # every angle just below its first boundary: A1, B1 -> 4
    ("just_below_edges", _post(arm=_arm(upper_arm_flexion=19.9, lower_arm_flexion=60,
                                        wrist_flexion=4.9),
                               neck_flexion=9.9, trunk_flexion=9.9), "right", 4),
    # on the boundaries (lower-inclusive): U2 L2 W2 -> A3; N2 K2 -> B2; C[6][5] = 6
    ("on_edges", _post(arm=_arm(upper_arm_flexion=20, lower_arm_flexion=100, wrist_flexion=5),
                       neck_flexion=10, trunk_flexion=10), "right", 6),
    # twist 2: U1 L1 W1 T2 -> A2; B1; C[5][4] = 5
    ("wrist_twisted", _post(arm=_arm(wrist_twist_score=2)), "right", 5),
    # deviation +1: W2 -> A2; C[5][4] = 5
    ("wrist_deviated", _post(arm=_arm(wrist_deviation_flag=True)), "right", 5),
    # midline +1: L2 -> A2; C[5][4] = 5
    ("across_midline", _post(arm=_arm(lower_arm_cross_midline=True)), "right", 5),
    # neck twist: N1+1=2 K1 -> B2; A1; C[4][5] = 5
    ("neck_twisted", _post(neck_flexion=5, neck_twist_flag=True), "right", 5),
    # trunk twist: N1 K1+1=2 -> B2; C[4][5] = 5
    ("trunk_twisted", _post(trunk_flexion=5, trunk_twist_flag=True), "right", 5),
    # N3 K1 -> B3; C[4][6] = 6
    ("head_down", _post(neck_flexion=25), "right", 6),
    # left arm scored: U3 L1 W1 -> A3; B1; C[6][4] = 6
    ("left_raised_arm", _post("left", arm=_arm(upper_arm_flexion=45)), "left", 6),
    # U4+abducted+raised=6 L1 W1 -> A7; B1; C[10->8][4] = 7
    ("abducted_overhead", _post(arm=_arm(upper_arm_flexion=90, upper_arm_abducted=True,
                                         shoulder_raised=True)), "right", 7),
    # K4+twist=5, N1 -> B6; A1; C[4][9->7] = 6
    ("deep_stoop_twisted", _post(trunk_flexion=65, trunk_twist_flag=True), "right", 6),
    # U1 L1 W2 -> A2; N2 K1 -> B2; C[5][5] = 6
    ("wrist_extended_head_down", _post(arm=_arm(upper_arm_flexion=-19, wrist_flexion=-14),
                                       neck_flexion=19), "right", 6),
    # U2 L2 W3+dev=4 T2 -> A4; B1; C[7][4] = 6
    ("awkward_wrist", _post(arm=_arm(upper_arm_flexion=44, lower_arm_flexion=59, wrist_flexion=15,
                                     wrist_deviation_flag=True, wrist_twist_score=2)), "right", 6),
    # A1; N1 K2 -> B2; C[4][5] = 5
    ("slight_lean", _post(arm=_arm(wrist_flexion=2), neck_flexion=8, trunk_flexion=12), "right", 5),
]


# -- exertion counting oracle --------------------------------------------------

def brute_force_counts(channels: np.ndarray, thresholds: np.ndarray, rearm: float,
                       window: int) -> np.ndarray:
    """Recount every window ``(k - window, k]`` from an armed start.

    All windows advance in lock step, one offset at a time; entries for
    ``k < window`` are -1.
    """
    n = channels.shape[0]
    out = np.full(n, -1)
    ends = np.arange(window, n)
    if ends.size == 0:
        return out
    starts = ends - window + 1
    armed = np.ones((ends.size, channels.shape[1]), dtype=bool)
    counts = np.zeros(ends.size, dtype=int)
    for off in range(window):
        x = channels[starts + off]
        fire = armed & (x > thresholds)
        counts += fire.any(axis=1)
        armed = np.where(armed, ~fire, x < rearm * thresholds)
    out[ends] = counts
    return out


# -- GRU reference ------------------------------------------------------------

def naive_gru_output(arrays: dict, window: np.ndarray, layers: int, hidden: int) -> float:
    """Step-by-step scalar-loop evaluation of the stacked cell and dense head."""
    H = hidden
    seq = [np.array(row, dtype=float) for row in window]
    for layer in range(layers):
        Wi, Wh = arrays[f"gru{layer}.W_i"], arrays[f"gru{layer}.W_h"]
        b, bhn = arrays[f"gru{layer}.b"], arrays[f"gru{layer}.b_hn"]
        W_ir, W_iz, W_in = Wi[:, :H], Wi[:, H:2 * H], Wi[:, 2 * H:]
        W_hr, W_hz, W_hn = Wh[:, :H], Wh[:, H:2 * H], Wh[:, 2 * H:]
        b_r, b_z, b_in = b[:H], b[H:2 * H], b[2 * H:]
        h = [0.0] * H
        outs = []
        for x in seq:
            new = []
            for j in range(H):
                ar = sum(x[i] * W_ir[i, j] for i in range(x.size)) + sum(h[i] * W_hr[i, j] for i in range(H)) + b_r[j]
                az = sum(x[i] * W_iz[i, j] for i in range(x.size)) + sum(h[i] * W_hz[i, j] for i in range(H)) + b_z[j]
                r = 1.0 / (1.0 + np.exp(-ar))
                z = 1.0 / (1.0 + np.exp(-az))
                hn = sum(h[i] * W_hn[i, j] for i in range(H)) + bhn[j]
                n = np.tanh(sum(x[i] * W_in[i, j] for i in range(x.size)) + b_in[j] + r * hn)
                new.append((1 - z) * n + z * h[j])
            h = new
            outs.append(np.array(h))
        seq = outs
    v = seq[-1]
    v = np.maximum(v @ arrays["head.W1"] + arrays["head.b1"], 0)
    v = np.maximum(v @ arrays["head.W2"] + arrays["head.b2"], 0)
    return float((v @ arrays["head.W3"] + arrays["head.b3"])[0])


# -- trials -------------------------------------------------------------------

@lru_cache(maxsize=None)
def synthetic_trial(participant: str = "P01", tool: str = "stringer", duration: float = 30.0,
                    seed: int = 0):
    spec = participant_scenario(participant, tool, duration, seed)
    return synchronize(generate_synthetic_trial(spec, seed))


def linear_stream(kind: str, side, rate: float, t0: float, t1: float, slope: np.ndarray,
                  offset: np.ndarray) -> SensorStream:
    t = t0 + np.arange(int(np.floor((t1 - t0) * rate)) + 1) / rate
    values = offset + t[:, None] * slope
    return SensorStream(kind, side, t, values, rate)


def linear_bundle(rates: dict, t0s: dict, duration: float = 5.0, seed: int = 0) -> TrialBundle:
    """Bundle whose every channel is an affine function of time (hands keep a fixed unit normal)."""
    rng = np.random.default_rng(seed)
    streams = {}
    for key, rate in rates.items():
        kind, side = key
        c = n_channels(kind)
        slope = rng.uniform(-1, 1, c)
        offset = rng.uniform(0, 5, c)
        if kind == "hand":
            slope[63:66] = 0.0
            offset[63:66] = (0.0, 0.6, 0.8)
        if kind == "glove":
            slope = np.abs(slope)
        if kind == "gonio":
            offset = rng.uniform(-20, 20, c)
            slope = rng.uniform(-2, 2, c)
        streams[key] = linear_stream(kind, side, rate, t0s[key], t0s[key] + duration, slope, offset)
    return TrialBundle("LIN", "stringer", streams)
