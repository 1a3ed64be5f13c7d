"""Biomechanically assessed wrist load (BACH).

Per frame: the net moment of the glove forces about the wrist, divided by the
hand's median moment over the trial, then scaled up by how weak the wrist is
in flexion at the current angle relative to its strongest angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BachError, UndefinedNormalizationError
from .series import ScoreSeries
from .streams import SIDES, GloveFrame, HandPoseFrame
from .taxels import TaxelMap, default_taxel_map

THETA_MIN, THETA_MAX = -90.0, 90.0
BRANCH_POINT = -8.0
# quadratic branch -0.001 t^2 + 0.083 t + 10.110 peaks at t = 0.083 / 0.002
THETA_PEAK = 0.083 / 0.002
TORQUE_MODES = ("magnitude", "flexion")
_EDGE = 1e-9


def clamp_theta(theta):
    """Clamp into the open interval (-90, 90)."""
    return np.clip(theta, THETA_MIN + _EDGE, THETA_MAX - _EDGE)


def m_flex(theta):
    """Maximum wrist flexion moment (N m) at flexion angle ``theta`` (degrees)."""
    th = clamp_theta(np.asarray(theta, dtype=float))
    linear = 0.041 * th + 9.696
    quad = -0.001 * th ** 2 + 0.083 * th + 10.110
    out = np.where(th <= BRANCH_POINT, linear, quad)
    return float(out) if out.ndim == 0 else out


M_MAX = float(m_flex(THETA_PEAK))


def alpha_wr(theta):
    return M_MAX / m_flex(theta)


@dataclass(frozen=True)
class BachParams:
    torque_mode: str = "magnitude"

    def __post_init__(self):
        if self.torque_mode not in TORQUE_MODES:
            raise BachError(f"torque_mode must be one of {TORQUE_MODES}")


@dataclass(frozen=True)
class WristState:
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(clamp_theta(self.theta)))


@dataclass(frozen=True)
class BachFrame:
    tau: float
    tau_median: float
    alpha: float
    score: float


def hand_frames(landmarks: np.ndarray, normals: np.ndarray, wrists: np.ndarray) -> np.ndarray:
    """Vectorised hand-local axes, (N, 3, 3) with columns x, y, z (z = palm normal)."""
    nrm = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(~np.isfinite(nrm)) or np.any(nrm < 1e-9):
        raise BachError("degenerate palm normal")
    z = normals / nrm
    x = landmarks[:, 9] - wrists
    x = x - np.sum(x * z, axis=1, keepdims=True) * z
    nx = np.linalg.norm(x, axis=1, keepdims=True)
    bad = nx[:, 0] < 1e-12
    if np.any(bad):
        alt = np.cross(z[bad], [1.0, 0.0, 0.0])
        weak = np.linalg.norm(alt, axis=1) < 1e-6
        alt[weak] = np.cross(z[bad][weak], [0.0, 1.0, 0.0])
        x[bad] = alt
        nx[bad] = np.linalg.norm(alt, axis=1, keepdims=True)
    x = x / nx
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=2)


def torques(landmarks: np.ndarray, normals: np.ndarray, wrists: np.ndarray,
            taxels: np.ndarray, taxel_map: TaxelMap | None = None,
            mode: str = "magnitude") -> np.ndarray:
    """Wrist torque per frame for (N, 21, 3) landmarks and (N, 65) taxel forces."""
    taxel_map = taxel_map or default_taxel_map()
    rot = hand_frames(landmarks, normals, wrists)
    z = rot[:, :, 2]
    pos = landmarks[:, taxel_map.landmark] + np.einsum("tj,nij->nti", taxel_map.offset, rot)
    lever = pos - wrists[:, None, :]
    # every taxel pushes along -normal, so the net moment is (sum f_i r_i) x (-n)
    moment = np.cross(np.einsum("nt,nti->ni", taxels, lever), -z)
    if mode == "flexion":
        return np.abs(np.sum(moment * rot[:, :, 1], axis=1))
    if mode != "magnitude":
        raise BachError(f"unknown torque mode {mode!r}")
    return np.linalg.norm(moment, axis=1)


def wrist_torque(hand: HandPoseFrame, glove: GloveFrame, taxel_map: TaxelMap | None = None,
                 mode: str = "magnitude") -> float:
    if hand.side != glove.side:
        raise BachError(f"hand pose is {hand.side} but glove is {glove.side}")
    return float(torques(hand.landmarks[None], np.asarray(hand.palm_normal)[None],
                         np.asarray(hand.wrist_position)[None], np.asarray(glove.taxels)[None],
                         taxel_map, mode)[0])


def bach_scores(tau: np.ndarray, theta: np.ndarray, label: str = "hand"):
    """Second pass: returns (score, tau_median, alpha)."""
    med = float(np.median(tau))
    if not med > 0:
        raise UndefinedNormalizationError(
            f"{label}: median wrist torque is zero, BACH normalization undefined")
    alpha = alpha_wr(theta)
    return tau / med * alpha, med, alpha


@dataclass(frozen=True)
class BachDiagnostics:
    tau: dict[str, np.ndarray]
    tau_median: dict[str, float]
    theta: dict[str, np.ndarray]
    alpha: dict[str, np.ndarray]

    def rows(self, t: np.ndarray):
        for k in range(t.size):
            yield [k, float(t[k])] + [v for s in SIDES for v in (
                float(self.tau[s][k]), float(self.theta[s][k]), float(self.alpha[s][k]))]


def bach_series(trial, taxel_map: TaxelMap | None = None, params: BachParams | None = None,
                with_diagnostics: bool = False):
    """BACH per tick per hand (optionally with the per-frame tau/theta/alpha)."""
    params = params or BachParams()
    out, tau, med, theta, alpha = {}, {}, {}, {}, {}
    for s in SIDES:
        hand = trial.values("hand", s)
        lm = hand[:, :63].reshape(-1, 21, 3)
        tau[s] = torques(lm, hand[:, 63:66], hand[:, 66:69], trial.values("glove", s),
                         taxel_map, params.torque_mode)
        theta[s] = clamp_theta(trial.values("gonio", s)[:, 0])
        out[s], med[s], alpha[s] = bach_scores(tau[s], theta[s], f"{s} hand")
    series = ScoreSeries("bach", trial.t, out["left"], out["right"])
    if with_diagnostics:
        return series, BachDiagnostics(tau, med, theta, alpha)
    return series
