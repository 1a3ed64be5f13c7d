"""Turn synchronized trials into model inputs.

RULA model rows are the per-tick joint-angle feature vectors of one side.
HAL model inputs are 250-sample windows of the six force channels (five
fingers plus their total), resampled from the 60 Hz ticks to 25 Hz so a
window spans the same 10 s as the exertion counter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError
from ..hal import HalParams, hal_series, trial_channels
from ..rula import RulaAdjustments, feature_matrix, rula_series, trial_angles
from ..streams import SIDES
from ..taxels import TaxelMap

ML_RATE = 25.0
WINDOW = 250
STRIDE_S = 1.0


@dataclass(frozen=True, eq=False)
class Samples:
    """Rows of inputs plus targets, tagged with where each row came from."""

    X: np.ndarray
    y: np.ndarray
    participant: np.ndarray
    tool: np.ndarray
    side: np.ndarray
    tick: np.ndarray

    def __len__(self) -> int:
        return int(self.y.size)

    def select(self, mask: np.ndarray) -> "Samples":
        return Samples(self.X[mask], self.y[mask], self.participant[mask], self.tool[mask],
                       self.side[mask], self.tick[mask])

    @staticmethod
    def concat(parts: list["Samples"]) -> "Samples":
        if not parts:
            raise ModelError("no samples to concatenate")
        return Samples(*(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("X", "y", "participant", "tool", "side", "tick")))


def _tags(n, trial, side, ticks):
    return (np.full(n, trial.participant_id, dtype=object), np.full(n, trial.tool, dtype=object),
            np.full(n, side, dtype=object), np.asarray(ticks, dtype=int))


def rula_samples(trial, adj: RulaAdjustments | None = None, stride: int = 1) -> Samples:
    """Joint-angle features and integer RULA scores for both sides."""
    a = trial_angles(trial)
    scores = rula_series(trial, adj)
    parts = []
    ticks = np.arange(0, len(trial), stride)
    for s in SIDES:
        X = feature_matrix(a, s)[ticks]
        parts.append(Samples(X, scores.side(s)[ticks].astype(float), *_tags(ticks.size, trial, s, ticks)))
    return Samples.concat(parts)


def window_ends(n_ticks: int, rate: float = 60.0, first: int | None = None,
                stride_s: float | None = STRIDE_S) -> np.ndarray:
    """End ticks of ML windows: from ``first`` (default one full 10 s window) onward."""
    first = int(round(10.0 * rate)) if first is None else first
    if stride_s is None:
        return np.arange(first, n_ticks)
    step = max(1, int(round(stride_s * rate)))
    return np.arange(first, n_ticks, step)


def resample_windows(t: np.ndarray, channels: np.ndarray, ends: np.ndarray,
                     length: int = WINDOW, rate: float = ML_RATE) -> np.ndarray:
    """(M, length, C) windows whose last sample sits exactly on ``t[end]``."""
    offsets = (np.arange(length) - (length - 1)) / rate
    q = t[ends][:, None] + offsets[None, :]
    if ends.size and q.min() < t[0] - 1e-9:
        raise ModelError("window reaches before the start of the trial")
    q = np.clip(q, t[0], t[-1]).ravel()
    out = np.column_stack([np.interp(q, t, channels[:, c]) for c in range(channels.shape[1])])
    return out.reshape(ends.size, length, channels.shape[1])


def hal_samples(trial, taxel_map: TaxelMap | None = None, params: HalParams | None = None,
                stride_s: float | None = STRIDE_S) -> Samples:
    """Force windows and per-window HAL targets for both hands."""
    params = params or HalParams()
    hal = hal_series(trial, taxel_map, params)
    chans = trial_channels(trial, taxel_map, params.include_palm)
    ends = window_ends(len(trial), trial.rate, params.window_ticks, stride_s)
    parts = []
    for s in SIDES:
        X = resample_windows(trial.t, chans[s], ends)
        parts.append(Samples(X, hal.side(s)[ends], *_tags(ends.size, trial, s, ends)))
    return Samples.concat(parts)

