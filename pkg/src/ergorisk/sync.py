"""Trim a trial to the time span shared by all sensors and resample every
stream onto the 60 Hz camera timeline."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StreamFormatError, SyncError
from .streams import (
    BODY_JOINTS, N_LANDMARKS, N_TAXELS, SIDES,
    BodyPoseFrame, GloveFrame, GonioSample, HandPoseFrame,
    SensorStream, TrialBundle, required_streams,
)

RATE = 60.0
TICK_TOL = 1e-9
MAX_BRIDGE = 0.5


@dataclass(frozen=True)
class TimeWindow:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise SyncError(f"empty time window [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start


def common_window(bundle: TrialBundle) -> TimeWindow:
    """Latest first sample to earliest last sample across all streams."""
    if not bundle.streams:
        raise SyncError("bundle has no streams")
    for s in bundle.streams.values():
        if len(s) == 0:
            raise SyncError(f"{s.label} is empty")
    start = max(float(s.t[0]) for s in bundle.streams.values())
    end = min(float(s.t[-1]) for s in bundle.streams.values())
    if not end > start:
        raise SyncError(f"streams share no common time span (start {start}, end {end})")
    return TimeWindow(start, end)


def n_ticks(window: TimeWindow, rate: float = RATE) -> int:
    x = window.length * rate
    k = math.floor(x)
    if (k + 1 - x) / rate <= TICK_TOL:
        k += 1
    return k + 1


def tick_times(window: TimeWindow, rate: float = RATE) -> np.ndarray:
    return window.start + np.arange(n_ticks(window, rate)) / rate


def interpolate(t: np.ndarray, values: np.ndarray, q: np.ndarray,
                native_rate: float = 0.0, max_bridge: float = MAX_BRIDGE,
                label: str = "stream") -> np.ndarray:
    """Piecewise-linear interpolation of ``values`` (rows at times ``t``) at ``q``.

    Intervals longer than two nominal sample periods count as gaps: up to
    ``max_bridge`` seconds they hold the last value, longer ones raise.
    """
    n = t.size
    if n < 2:
        raise SyncError(f"{label}: need at least two samples to resample")
    q = np.clip(q, t[0], t[-1])
    i = np.clip(np.searchsorted(t, q, side="right") - 1, 0, n - 2)
    t0, t1 = t[i], t[i + 1]
    dt = t1 - t0
    w = (q - t0) / dt
    if native_rate <= 0:
        native_rate = 1.0 / float(np.median(np.diff(t)))
    in_gap = (dt > 2.0 / native_rate) & (q > t0)
    if np.any(in_gap & (dt > max_bridge)):
        j = int(np.flatnonzero(in_gap & (dt > max_bridge))[0])
        raise SyncError(f"{label}: {dt[j]:.3f} s gap at t={t0[j]:.3f} exceeds the "
                        f"{max_bridge} s bridging limit")
    w = np.where(in_gap, 0.0, w)[:, None]
    v0, v1 = values[i], values[i + 1]
    out = v0 + w * (v1 - v0)
    out = np.where(w == 0.0, v0, out)
    return np.where(w == 1.0, v1, out)


def resample(stream: SensorStream, window: TimeWindow, rate: float = RATE,
             max_bridge: float = MAX_BRIDGE) -> SensorStream:
    if len(stream) and (stream.t[0] > window.start + TICK_TOL
                        or stream.t[-1] < window.end - TICK_TOL):
        raise SyncError(f"{stream.label} does not cover the window "
                        f"[{window.start}, {window.end}]")
    q = tick_times(window, rate)
    values = interpolate(stream.t, stream.values, q, stream.native_rate, max_bridge, stream.label)
    if stream.kind == "hand":
        nrm = np.linalg.norm(values[:, 63:66], axis=1, keepdims=True)
        values[:, 63:66] = values[:, 63:66] / nrm
    return SensorStream(stream.kind, stream.side, q, values, rate, stream.ceiling)


@dataclass(frozen=True)
class SyncedRecord:
    body: BodyPoseFrame
    hands: dict[str, HandPoseFrame]
    gonio: dict[str, GonioSample]
    glove: dict[str, GloveFrame]


@dataclass(frozen=True, eq=False)
class SyncedTrial:
    """All modalities on one shared 60 Hz tick sequence."""

    participant_id: str
    tool: str
    t: np.ndarray
    streams: dict[tuple[str, str | None], SensorStream]
    rate: float = RATE

    def __len__(self) -> int:
        return self.t.size

    def values(self, kind: str, side: str | None = None) -> np.ndarray:
        return self.streams[(kind, side)].values

    def record(self, k: int) -> SyncedRecord:
        return SyncedRecord(
            body=self.streams[("body", None)].frame(k),
            hands={s: self.streams[("hand", s)].frame(k) for s in SIDES},
            gonio={s: self.streams[("gonio", s)].frame(k) for s in SIDES},
            glove={s: self.streams[("glove", s)].frame(k) for s in SIDES},
        )

    def to_bundle(self) -> TrialBundle:
        return TrialBundle(self.participant_id, self.tool, dict(self.streams))

    def ceiling(self) -> float:
        return self.streams[("glove", "left")].ceiling


def synchronize(bundle: TrialBundle, max_bridge: float = MAX_BRIDGE) -> SyncedTrial:
    missing = [k for k in required_streams() if k not in bundle.streams]
    if missing:
        raise SyncError("cannot synchronize, missing " + ", ".join(
            f"{side + ' ' if side else ''}{kind}" for kind, side in missing))
    window = common_window(bundle)
    streams = {key: resample(bundle.streams[key], window, RATE, max_bridge)
               for key in required_streams()}
    t = streams[("body", None)].t
    return SyncedTrial(bundle.participant_id, bundle.tool, t, streams)


# -- persistence --------------------------------------------------------------

def _columns(kind: str, side: str | None) -> list[str]:
    if kind == "body":
        return [f"body.{j}.{a}" for j in BODY_JOINTS for a in "xyz"]
    if kind == "hand":
        cols = [f"hand.{side}.lm{i}.{a}" for i in range(N_LANDMARKS) for a in "xyz"]
        return cols + [f"hand.{side}.normal.{a}" for a in "xyz"] + [f"hand.{side}.wrist.{a}" for a in "xyz"]
    if kind == "gonio":
        return [f"gonio.{side}.ch1", f"gonio.{side}.ch2"]
    return [f"glove.{side}.taxel{i}" for i in range(N_TAXELS)]


def layout() -> list[dict]:
    blocks, col = [], 1
    for kind, side in required_streams():
        names = _columns(kind, side)
        blocks.append({"kind": kind, "side": side, "first_column": col, "n_columns": len(names)})
        col += len(names)
    return blocks


def save_synced(trial: SyncedTrial, directory: str | Path, meta: dict | None = None) -> Path:
    """Write ``synced.csv`` (one row per tick) and its ``synced.json`` header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    keys = required_streams()
    columns = ["t"] + [c for k in keys for c in _columns(*k)]
    data = np.column_stack([trial.t] + [trial.streams[k].values for k in keys])
    lines = [",".join(columns)]
    lines += [",".join(map(repr, row)) for row in data.tolist()]
    (directory / "synced.csv").write_text("\n".join(lines) + "\n")
    header = {
        "format": "ergorisk-synced/1",
        "participant_id": trial.participant_id,
        "tool": trial.tool,
        "rate": trial.rate,
        "n_ticks": len(trial),
        "saturation_ceiling": trial.ceiling(),
        "csv": "synced.csv",
        "columns": columns,
        "blocks": layout(),
    }
    if meta:
        header["meta"] = meta
    path = directory / "synced.json"
    path.write_text(json.dumps(header, indent=1) + "\n")
    return path


def load_synced(path: str | Path) -> SyncedTrial:
    path = Path(path)
    if path.is_dir():
        path = path / "synced.json"
    try:
        header = json.loads(path.read_text())
    except FileNotFoundError:
        raise StreamFormatError(f"{path}: no such file") from None
    csv_path = path.parent / header["csv"]
    rows = csv_path.read_text().splitlines()
    if rows[0].split(",") != header["columns"]:
        raise StreamFormatError(f"{csv_path}: column header disagrees with {path.name}")
    data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]]).reshape(
        len(rows) - 1, len(header["columns"]))
    t = data[:, 0]
    streams = {}
    for block in header["blocks"]:
        kind, side = block["kind"], block["side"]
        a = block["first_column"]
        streams[(kind, side)] = SensorStream(kind, side, t, data[:, a:a + block["n_columns"]],
                                             header["rate"], header["saturation_ceiling"])
    return SyncedTrial(header["participant_id"], header["tool"], streams[("body", None)].t,
                       streams, header["rate"])

