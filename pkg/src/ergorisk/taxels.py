"""Glove taxel layout: which hand landmark each of the 65 taxels rides on.

Hand landmarks follow the common 21-point convention: 0 wrist, then four
points per digit from base to tip (thumb 1-4, index 5-8, middle 9-12,
ring 13-16, little 17-20).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StreamFormatError
from .streams import N_LANDMARKS, N_TAXELS

FINGERS = ("thumb", "index", "middle", "ring", "little", "palm")
DIGIT_LANDMARKS = {
    "thumb": (1, 2, 3, 4),
    "index": (5, 6, 7, 8),
    "middle": (9, 10, 11, 12),
    "ring": (13, 14, 15, 16),
    "little": (17, 18, 19, 20),
}
PALM_LANDMARKS = (0, 5, 9, 13, 17)
TAXEL_SPACING = 0.006  # m, across the finger width
PAD_DEPTH = 0.008  # m, palmar side of the bone line


@dataclass(frozen=True, eq=False)
class TaxelMap:
    """Per-taxel landmark index, hand-local offset (m) and finger id (index into FINGERS)."""

    landmark: np.ndarray
    offset: np.ndarray
    finger: np.ndarray

    def __post_init__(self):
        landmark = np.asarray(self.landmark, dtype=int)
        offset = np.asarray(self.offset, dtype=float)
        finger = np.asarray(self.finger, dtype=int)
        if landmark.shape != (N_TAXELS,) or offset.shape != (N_TAXELS, 3) \
                or finger.shape != (N_TAXELS,):
            raise StreamFormatError(f"taxel map must cover exactly {N_TAXELS} taxels")
        if landmark.min() < 0 or landmark.max() >= N_LANDMARKS:
            raise StreamFormatError("taxel mapped to a landmark outside 0-20")
        if finger.min() < 0 or finger.max() >= len(FINGERS):
            raise StreamFormatError("taxel mapped to an unknown finger")
        for a in (landmark, offset, finger):
            a.setflags(write=False)
        object.__setattr__(self, "landmark", landmark)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "finger", finger)

    def taxels_of(self, finger: str) -> np.ndarray:
        return np.flatnonzero(self.finger == FINGERS.index(finger))

    def fingertip_taxels(self, finger: str) -> np.ndarray:
        tip = DIGIT_LANDMARKS[finger][-1]
        return np.flatnonzero((self.finger == FINGERS.index(finger)) & (self.landmark == tip))

    def to_dict(self) -> dict:
        return {"taxels": [
            {"landmark": int(l), "offset": [float(x) for x in o], "finger": FINGERS[f]}
            for l, o, f in zip(self.landmark, self.offset, self.finger)]}

    @classmethod
    def from_dict(cls, d: dict) -> "TaxelMap":
        try:
            entries = d["taxels"]
            return cls(np.array([e["landmark"] for e in entries]),
                       np.array([e["offset"] for e in entries], dtype=float),
                       np.array([FINGERS.index(e["finger"]) for e in entries]))
        except (KeyError, ValueError, TypeError) as exc:
            raise StreamFormatError(f"malformed taxel map: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "TaxelMap":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_taxel_map() -> TaxelMap:
    """12 taxels per digit (4 landmarks x 3 across the width) plus 5 palm taxels."""
    landmark, offset, finger = [], [], []
    for fi, name in enumerate(FINGERS[:5]):
        for lm in DIGIT_LANDMARKS[name]:
            for k in (-1, 0, 1):
                landmark.append(lm)
                offset.append((0.0, k * TAXEL_SPACING, -PAD_DEPTH))
                finger.append(fi)
    for lm in PALM_LANDMARKS:
        landmark.append(lm)
        # heel of the palm sits distal to the wrist, the rest proximal to the knuckles
        offset.append((0.03 if lm == 0 else -0.02, 0.0, -PAD_DEPTH))
        finger.append(FINGERS.index("palm"))
    return TaxelMap(np.array(landmark), np.array(offset), np.array(finger))


def hand_frame(landmarks: np.ndarray, palm_normal: np.ndarray, wrist: np.ndarray) -> np.ndarray:
    """Rotation whose columns are the hand-local x (toward the middle knuckle), y, z (palm normal)."""
    z = palm_normal / np.linalg.norm(palm_normal)
    x = landmarks[9] - wrist
    x = x - np.dot(x, z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        # degenerate hand: pick any direction in the palm plane
        x = np.cross(z, [1.0, 0.0, 0.0])
        if np.linalg.norm(x) < 1e-6:
            x = np.cross(z, [0.0, 1.0, 0.0])
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def taxel_positions(landmarks: np.ndarray, palm_normal: np.ndarray, wrist: np.ndarray,
                    taxel_map: TaxelMap) -> np.ndarray:
    """World positions (65, 3) of the taxels for one hand pose."""
    rot = hand_frame(landmarks, palm_normal, wrist)
    return landmarks[taxel_map.landmark] + taxel_map.offset @ rot.T
