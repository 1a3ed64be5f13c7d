"""Sensor stream data model, JSONL stream files and bundle manifests.

Streams are stored column-wise: a timestamp vector ``t`` and a value matrix
with one row per sample. Per-frame views (``BodyPoseFrame`` and friends) are
built on demand for the per-frame scoring APIs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ModalityError, OrderingError, StreamFormatError

SIDES = ("left", "right")
KINDS = ("body", "hand", "gonio", "glove")
SIDED_KINDS = ("hand", "gonio", "glove")
TOOLS = ("stringer", "convex_mold")

# COCO-17 ordering plus the two derived midpoints.
BODY_JOINTS = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
    "mid_shoulder", "mid_hip",
)
REQUIRED_JOINTS = (
    "nose", "left_eye", "right_eye", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hip", "right_hip", "mid_shoulder", "mid_hip",
)
JOINT_INDEX = {name: i for i, name in enumerate(BODY_JOINTS)}
N_LANDMARKS = 21
N_TAXELS = 65
DEFAULT_CEILING = 100.0
GONIO_LIMITS = (120.0, 90.0)

_FIELDS = {
    "body": {"t", "joints"},
    "hand": {"t", "landmarks", "palm_normal", "wrist"},
    "gonio": {"t", "ch1", "ch2"},
    "glove": {"t", "taxels"},
}


def n_channels(kind: str) -> int:
    if kind == "body":
        return 3 * len(BODY_JOINTS)
    if kind == "hand":
        return 3 * N_LANDMARKS + 6
    if kind == "gonio":
        return 2
    if kind == "glove":
        return N_TAXELS
    raise ModalityError(f"unknown modality {kind!r}")


def stream_label(kind: str, side: str | None) -> str:
    return kind if side is None else f"{side} {kind}"


@dataclass(frozen=True)
class BodyPoseFrame:
    joints: dict[str, np.ndarray]

    def missing(self) -> list[str]:
        return [j for j in REQUIRED_JOINTS
                if j not in self.joints or not np.all(np.isfinite(self.joints[j]))]


@dataclass(frozen=True)
class HandPoseFrame:
    side: str
    landmarks: np.ndarray
    palm_normal: np.ndarray
    wrist_position: np.ndarray


@dataclass(frozen=True)
class GonioSample:
    side: str
    ch1: float
    ch2: float


@dataclass(frozen=True)
class GloveFrame:
    side: str
    taxels: np.ndarray
    saturation_flags: np.ndarray


@dataclass(frozen=True, eq=False)
class SensorStream:
    """One modality (and side) sampled at its native rate.

    ``values`` has shape ``(len(t), n_channels(kind))``. Body joints are laid
    out as consecutive xyz triples in ``BODY_JOINTS`` order, with NaN marking
    a missing joint. Hand rows are 21 landmark triples, then the palm normal,
    then the wrist position.
    """

    kind: str
    side: str | None
    t: np.ndarray
    values: np.ndarray
    native_rate: float = 0.0
    ceiling: float = DEFAULT_CEILING

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModalityError(f"unknown modality {self.kind!r}")
        if (self.kind in SIDED_KINDS) != (self.side in SIDES):
            raise ModalityError(f"bad side {self.side!r} for {self.kind}")
        t = np.asarray(self.t, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (t.size, n_channels(self.kind)):
            raise ModalityError(
                f"{stream_label(self.kind, self.side)}: values shape {values.shape} "
                f"does not match {t.size} samples x {n_channels(self.kind)} channels")
        if not np.all(np.isfinite(t)):
            raise StreamFormatError("non-finite timestamp")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            i = int(np.argmax(np.diff(t) <= 0))
            raise OrderingError(
                f"{stream_label(self.kind, self.side)}: timestamps not strictly "
                f"increasing at sample {i + 1} ({t[i]!r} -> {t[i + 1]!r})")
        if self.kind == "glove" and np.any(values < 0):
            raise StreamFormatError(f"{self.side} glove: negative taxel force")
        if self.kind == "hand" and t.size:
            norms = np.linalg.norm(values[:, 63:66], axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise StreamFormatError(f"{self.side} hand: palm normal is not unit length")
        rate = self.native_rate
        if not rate and t.size > 1:
            rate = 1.0 / float(np.median(np.diff(t)))
        t.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "native_rate", float(rate))

    def __len__(self) -> int:
        return self.t.size

    @property
    def label(self) -> str:
        return stream_label(self.kind, self.side)

    @property
    def saturation_flags(self) -> np.ndarray:
        if self.kind != "glove":
            raise ModalityError("saturation flags exist only for glove streams")
        return self.values >= self.ceiling

    def frame(self, i: int):
        return make_frame(self.kind, self.side, self.values[i], self.ceiling)

    def frames(self) -> list:
        return [self.frame(i) for i in range(len(self))]


def make_frame(kind: str, side: str | None, row: np.ndarray, ceiling: float = DEFAULT_CEILING):
    if kind == "body":
        xyz = row.reshape(-1, 3)
        return BodyPoseFrame({name: xyz[i] for i, name in enumerate(BODY_JOINTS)})
    if kind == "hand":
        return HandPoseFrame(side, row[:63].reshape(N_LANDMARKS, 3), row[63:66], row[66:69])
    if kind == "gonio":
        return GonioSample(side, float(row[0]), float(row[1]))
    return GloveFrame(side, row, row >= ceiling)


# -- JSONL encoding -----------------------------------------------------------

def _vec(x, n: int, what: str) -> list[float]:
    if not isinstance(x, list) or len(x) != n:
        raise StreamFormatError(f"{what}: expected a list of {n} numbers")
    try:
        out = [float(v) for v in x]
    except (TypeError, ValueError) as exc:
        raise StreamFormatError(f"{what}: non-numeric entry") from exc
    if not all(math.isfinite(v) for v in out):
        raise StreamFormatError(f"{what}: non-finite entry")
    return out


def decode_record(kind: str, rec: dict) -> tuple[float, np.ndarray]:
    """Turn one parsed JSON object into ``(t, row)``."""
    if not isinstance(rec, dict):
        raise StreamFormatError("record is not a JSON object")
    keys = set(rec)
    expected = _FIELDS[kind]
    if not expected <= keys:
        others = [k for k, f in _FIELDS.items() if k != kind and f - {"t"} <= keys]
        if others:
            raise ModalityError(f"record looks like {others[0]!r}, expected {kind!r}")
        raise StreamFormatError(f"missing fields {sorted(expected - keys)}")
    t = rec["t"]
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise StreamFormatError("field 't' must be a finite number")
    row = np.full(n_channels(kind), np.nan)
    if kind == "body":
        joints = rec["joints"]
        if not isinstance(joints, dict):
            raise StreamFormatError("'joints' must be an object")
        unknown = set(joints) - set(JOINT_INDEX)
        if unknown:
            raise StreamFormatError(f"unknown joints {sorted(unknown)}")
        for name, xyz in joints.items():
            if xyz is None:
                continue
            j = JOINT_INDEX[name]
            row[3 * j:3 * j + 3] = _vec(xyz, 3, f"joint {name}")
        _derive_midpoints(row, "mid_shoulder", "left_shoulder", "right_shoulder", joints)
        _derive_midpoints(row, "mid_hip", "left_hip", "right_hip", joints)
    elif kind == "hand":
        lms = rec["landmarks"]
        if not isinstance(lms, list) or len(lms) != N_LANDMARKS:
            raise StreamFormatError(f"'landmarks' must hold exactly {N_LANDMARKS} points")
        for i, p in enumerate(lms):
            row[3 * i:3 * i + 3] = _vec(p, 3, f"landmark {i}")
        row[63:66] = _vec(rec["palm_normal"], 3, "palm_normal")
        row[66:69] = _vec(rec["wrist"], 3, "wrist")
    elif kind == "gonio":
        ch = _vec([rec["ch1"], rec["ch2"]], 2, "goniometer channels")
        row[0] = min(max(ch[0], -GONIO_LIMITS[0]), GONIO_LIMITS[0])
        row[1] = min(max(ch[1], -GONIO_LIMITS[1]), GONIO_LIMITS[1])
    else:
        row[:] = _vec(rec["taxels"], N_TAXELS, "taxels")
    return float(t), row


def _derive_midpoints(row, mid, a, b, given):
    if mid in given:
        return
    ia, ib, im = JOINT_INDEX[a], JOINT_INDEX[b], JOINT_INDEX[mid]
    row[3 * im:3 * im + 3] = 0.5 * (row[3 * ia:3 * ia + 3] + row[3 * ib:3 * ib + 3])


def _triple(v: np.ndarray) -> list[float] | None:
    if not np.all(np.isfinite(v)):
        return None
    return [float(x) for x in v]


def encode_record(kind: str, t: float, row: np.ndarray) -> dict:
    rec: dict = {"t": float(t)}
    if kind == "body":
        joints = {}
        for i, name in enumerate(BODY_JOINTS):
            xyz = _triple(row[3 * i:3 * i + 3])
            if xyz is None and name not in REQUIRED_JOINTS:
                continue
            joints[name] = xyz
        rec["joints"] = joints
    elif kind == "hand":
        rec["landmarks"] = [[float(x) for x in row[3 * i:3 * i + 3]] for i in range(N_LANDMARKS)]
        rec["palm_normal"] = [float(x) for x in row[63:66]]
        rec["wrist"] = [float(x) for x in row[66:69]]
    elif kind == "gonio":
        rec["ch1"] = float(row[0])
        rec["ch2"] = float(row[1])
    else:
        rec["taxels"] = [float(x) for x in row]
    return rec


def dumps_stream(stream: SensorStream) -> str:
    lines = [json.dumps(encode_record(stream.kind, t, row), separators=(",", ":"))
             for t, row in zip(stream.t, stream.values)]
    return "".join(line + "\n" for line in lines)


def save_stream(stream: SensorStream, path: str | Path) -> None:
    Path(path).write_text(dumps_stream(stream))


def parse_stream(lines: Iterable[str], kind: str, side: str | None = None,
                 ceiling: float = DEFAULT_CEILING, rate: float = 0.0,
                 source: str = "<stream>") -> SensorStream:
    if kind not in KINDS:
        raise ModalityError(f"unknown modality {kind!r}")
    ts, rows = [], []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"{source}:{lineno}: malformed JSON ({exc.msg})") from exc
        try:
            t, row = decode_record(kind, rec)
        except (StreamFormatError, ModalityError) as exc:
            raise type(exc)(f"{source}:{lineno}: {exc}") from exc
        ts.append(t)
        rows.append(row)
    values = np.array(rows).reshape(len(rows), n_channels(kind))
    return SensorStream(kind, side, np.array(ts), values, rate, ceiling)


def load_stream(path: str | Path, kind: str, side: str | None = None,
                ceiling: float = DEFAULT_CEILING, rate: float = 0.0) -> SensorStream:
    """Load and validate a JSONL stream file."""
    path = Path(path)
    if not path.exists():
        raise StreamFormatError(f"{path}: no such file")
    with path.open() as fh:
        return parse_stream(fh, kind, side, ceiling, rate, source=str(path))


# -- bundles ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrialBundle:
    participant_id: str
    tool: str
    streams: dict[tuple[str, str | None], SensorStream] = field(default_factory=dict)

    def __post_init__(self):
        if self.tool not in TOOLS:
            raise StreamFormatError(f"unknown tool {self.tool!r}; expected one of {TOOLS}")
        for (kind, side), s in self.streams.items():
            if (s.kind, s.side) != (kind, side):
                raise ModalityError(f"stream {s.label} filed under {stream_label(kind, side)}")

    def get(self, kind: str, side: str | None = None) -> SensorStream:
        try:
            return self.streams[(kind, side)]
        except KeyError:
            raise ModalityError(f"{stream_label(kind, side)} absent") from None


def required_streams() -> list[tuple[str, str | None]]:
    keys: list[tuple[str, str | None]] = [("body", None)]
    for kind in SIDED_KINDS:
        keys += [(kind, side) for side in SIDES]
    return keys


def _stream_filename(kind: str, side: str | None) -> str:
    return f"{kind}.jsonl" if side is None else f"{kind}_{side}.jsonl"


def save_bundle(bundle: TrialBundle, directory: str | Path, extra: dict | None = None) -> Path:
    """Write every stream plus ``manifest.json`` into *directory*."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    ceiling = DEFAULT_CEILING
    for kind, side in sorted(bundle.streams, key=lambda k: (KINDS.index(k[0]), k[1] or "")):
        s = bundle.streams[(kind, side)]
        name = _stream_filename(kind, side)
        save_stream(s, directory / name)
        entries.append({"kind": kind, "side": side, "path": name, "rate": s.native_rate})
        if kind == "glove":
            ceiling = s.ceiling
    manifest = {"participant_id": bundle.participant_id, "tool": bundle.tool,
                "saturation_ceiling": ceiling, "streams": entries}
    if extra:
        manifest.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_bundle(manifest_path: str | Path, ceiling: float | None = None) -> TrialBundle:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise StreamFormatError(f"{manifest_path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise StreamFormatError(f"{manifest_path}: malformed manifest ({exc.msg})") from exc
    for key in ("participant_id", "tool", "streams"):
        if key not in manifest:
            raise StreamFormatError(f"{manifest_path}: manifest lacks {key!r}")
    if ceiling is None:
        ceiling = float(manifest.get("saturation_ceiling", DEFAULT_CEILING))
    streams = {}
    for entry in manifest["streams"]:
        kind, side = entry["kind"], entry.get("side")
        key = (kind, side)
        if key in streams:
            raise StreamFormatError(f"{stream_label(kind, side)} listed twice in manifest")
        path = manifest_path.parent / entry["path"]
        streams[key] = load_stream(path, kind, side, ceiling, float(entry.get("rate", 0.0)))
    return TrialBundle(str(manifest["participant_id"]), manifest["tool"], streams)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Gap:
    stream: str
    start: float
    duration: float


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)
    gaps: list[Gap] = field(default_factory=list)
    saturation: dict[str, float] = field(default_factory=dict)
    fatal: bool = False

    def to_dict(self) -> dict:
        return {"issues": self.issues, "fatal": self.fatal,
                "gaps": [{"stream": g.stream, "start": g.start, "duration": g.duration}
                         for g in self.gaps],
                "saturation": self.saturation}


def find_gaps(stream: SensorStream, factor: float = 2.0) -> list[Gap]:
    """Intervals between consecutive samples longer than ``factor`` nominal periods."""
    if len(stream) < 2:
        return []
    dt = np.diff(stream.t)
    nominal = 1.0 / stream.native_rate
    idx = np.flatnonzero(dt > factor * nominal)
    return [Gap(stream.label, float(stream.t[i]), float(dt[i])) for i in idx]


def validate_bundle(bundle: TrialBundle, max_bridge: float = 0.5) -> ValidationReport:
    """Report missing modalities, sampling gaps and glove saturation.

    Never raises; ``fatal`` is set when synchronization would fail (a missing
    modality, an empty stream or a gap longer than ``max_bridge`` seconds).
    """
    report = ValidationReport()
    for kind, side in required_streams():
        if (kind, side) not in bundle.streams:
            report.issues.append(f"{stream_label(kind, side)} absent")
            report.fatal = True
    for key in sorted(bundle.streams, key=lambda k: (KINDS.index(k[0]), k[1] or "")):
        s = bundle.streams[key]
        if len(s) == 0:
            report.issues.append(f"{s.label} empty")
            report.fatal = True
            continue
        for gap in find_gaps(s):
            report.gaps.append(gap)
            if gap.duration > max_bridge:
                report.issues.append(
                    f"{s.label} gap of {gap.duration:.3f} s at t={gap.start:.3f}")
                report.fatal = True
        if s.kind == "glove":
            report.saturation[s.label] = float(np.mean(s.saturation_flags))
        if s.kind == "body":
            missing = ~np.isfinite(s.values).reshape(len(s), -1, 3).all(axis=2)
            for name in REQUIRED_JOINTS:
                frac = float(missing[:, JOINT_INDEX[name]].mean())
                if frac > 0:
                    report.issues.append(f"body joint {name} missing in {frac:.1%} of frames")
    return report
