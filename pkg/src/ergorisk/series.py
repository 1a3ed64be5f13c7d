"""Per-tick score series for both body sides and their CSV form."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StreamFormatError

KINDS = ("rula", "hal", "bach")


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    kind: str
    t: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        if not (len(self.t) == len(self.left) == len(self.right)):
            raise ValueError("score series sides differ in length")

    def __len__(self) -> int:
        return len(self.t)

    def side(self, side: str) -> np.ndarray:
        return self.left if side == "left" else self.right


def header_lines(meta: dict | None) -> list[str]:
    if not meta:
        return []
    return ["# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta))]


def _fmt(x) -> str:
    return repr(int(x)) if isinstance(x, (np.integer, int)) else repr(float(x))


def save_series(series: ScoreSeries, path: str | Path, meta: dict | None = None) -> None:
    """CSV with columns ``tick, t, left_<kind>, right_<kind>``; '#' lines carry provenance."""
    lines = header_lines(meta)
    lines.append(f"tick,t,left_{series.kind},right_{series.kind}")
    for k, (t, a, b) in enumerate(zip(series.t, series.left.tolist(), series.right.tolist())):
        lines.append(f"{k},{float(t)!r},{_fmt(a)},{_fmt(b)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_series(path: str | Path) -> ScoreSeries:
    rows = [r for r in Path(path).read_text().splitlines() if r and not r.startswith("#")]
    head = rows[0].split(",")
    if len(head) != 4 or head[:2] != ["tick", "t"]:
        raise StreamFormatError(f"{path}: not a score series CSV")
    kind = head[2].split("_", 1)[1]
    cols = list(zip(*(r.split(",") for r in rows[1:]))) or [(), (), (), ()]
    conv = int if kind == "rula" else float
    return ScoreSeries(kind, np.array([float(x) for x in cols[1]]),
                       np.array([conv(x) for x in cols[2]]), np.array([conv(x) for x in cols[3]]))


def save_long(series: list[ScoreSeries], path: str | Path, meta: dict | None = None) -> None:
    """Tidy long format: one row per (tick, score_kind, side)."""
    lines = header_lines(meta)
    lines.append("tick,t,score_kind,side,value")
    for s in series:
        for side in ("left", "right"):
            for k, (t, v) in enumerate(zip(s.t, s.side(side).tolist())):
                lines.append(f"{k},{float(t)!r},{s.kind},{side},{_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")
