"""Hand Activity Level from glove forces.

Exertions are rising-edge events: a channel (one finger sum, or the total
over the five fingers) fires when it rises above its threshold and re-arms
only after dropping below ``rearm_fraction`` of it. Each 10 s window is
counted from scratch with every channel armed at the window start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HalError
from .series import ScoreSeries
from .streams import SIDES, GloveFrame
from .taxels import FINGERS, TaxelMap, default_taxel_map

GROUPINGS = ("as_printed", "duty_outside_log")
EXPONENT = 1.31


@dataclass(frozen=True)
class HalParams:
    duty_cycle: float = 75.0
    work_time: float = 10.0
    finger_threshold: float = 15.0
    overall_threshold: float = 44.8
    rearm_fraction: float = 0.9
    formula_grouping: str = "as_printed"
    clamp_low: float = 0.0
    clamp_high: float = 10.0
    include_palm: bool = False
    rate: float = 60.0

    def __post_init__(self):
        if self.finger_threshold <= 0 or self.overall_threshold <= 0:
            raise HalError("force thresholds must be positive")
        if not 0 < self.rearm_fraction < 1:
            raise HalError("rearm_fraction must lie in (0, 1)")
        if self.formula_grouping not in GROUPINGS:
            raise HalError(f"formula_grouping must be one of {GROUPINGS}")
        if self.work_time <= 0 or self.duty_cycle <= 0:
            raise HalError("work_time and duty_cycle must be positive")
        if self.clamp_high <= self.clamp_low:
            raise HalError("empty clamp range")

    @property
    def window_ticks(self) -> int:
        return int(round(self.work_time * self.rate))

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([self.finger_threshold] * 5 + [self.overall_threshold])


@dataclass(frozen=True)
class FingerForces:
    f: np.ndarray
    total: float


@dataclass(frozen=True)
class ExertionCount:
    count: int
    F: float


def _finger_matrix(taxel_map: TaxelMap) -> np.ndarray:
    m = np.zeros((taxel_map.finger.size, 5))
    for i, fid in enumerate(taxel_map.finger):
        if fid < 5:
            m[i, fid] = 1.0
    return m


def force_channels(taxels: np.ndarray, taxel_map: TaxelMap | None = None,
                   include_palm: bool = False) -> np.ndarray:
    """(N, 65) taxel forces -> (N, 6): five finger sums then their total."""
    taxel_map = taxel_map or default_taxel_map()
    taxels = np.atleast_2d(taxels)
    fingers = taxels @ _finger_matrix(taxel_map)
    total = fingers.sum(axis=1)
    if include_palm:
        total = total + taxels[:, taxel_map.finger == FINGERS.index("palm")].sum(axis=1)
    return np.column_stack([fingers, total])


def finger_force_sums(glove: GloveFrame, taxel_map: TaxelMap | None = None,
                      include_palm: bool = False) -> FingerForces:
    ch = force_channels(glove.taxels, taxel_map, include_palm)[0]
    return FingerForces(ch[:5], float(ch[5]))


def _as_channels(window) -> np.ndarray:
    if isinstance(window, np.ndarray):
        return np.atleast_2d(window)
    return np.array([list(w.f) + [w.total] for w in window]).reshape(-1, 6)


def _run(channels: np.ndarray, thresholds: np.ndarray, rearm: float):
    """Hysteresis machine over all ticks starting armed.

    Returns per-channel trigger flags and the armed state *before* each tick.
    """
    n, c = channels.shape
    trig = np.zeros((n, c), dtype=bool)
    armed_before = np.zeros((n, c), dtype=bool)
    above = channels > thresholds
    below = channels < rearm * thresholds
    armed = np.ones(c, dtype=bool)
    for t in range(n):
        armed_before[t] = armed
        fire = armed & above[t]
        trig[t] = fire
        armed = (armed & ~fire) | (~armed & below[t])
    return trig, armed_before


def count_exertions(window, params: HalParams | None = None) -> ExertionCount:
    """Count exertions in one window (ticks x 6 channels, or a FingerForces sequence)."""
    params = params or HalParams()
    ch = _as_channels(window)
    if ch.shape[0] != params.window_ticks:
        raise HalError(f"window has {ch.shape[0]} ticks, expected {params.window_ticks}")
    trig, _ = _run(ch, params.thresholds, params.rearm_fraction)
    count = int(np.count_nonzero(trig.any(axis=1)))
    return ExertionCount(count, count / params.work_time)


def hal_from_frequency(F: float, params: HalParams | None = None) -> float:
    params = params or HalParams()
    if F <= 0:
        return float(params.clamp_low)
    fa = F ** EXPONENT
    denom = 1.0 + 3.18 * fa
    if params.formula_grouping == "as_printed":
        raw = 6.56 * math.log(params.duty_cycle * fa / denom)
    else:
        raw = 6.56 * math.log(params.duty_cycle) * fa / denom
    return float(min(max(raw, params.clamp_low), params.clamp_high))


def hal_from_count(count: ExertionCount | int, params: HalParams | None = None) -> float:
    params = params or HalParams()
    if isinstance(count, ExertionCount):
        F = count.F
    else:
        F = int(count) / params.work_time
    return hal_from_frequency(F, params)


def sliding_counts(channels: np.ndarray, params: HalParams | None = None) -> np.ndarray:
    """Exertion count of every window ``(k - W, k]``; entries for ``k < W`` are -1.

    One pass of the hysteresis machine over the whole trial, then a per-window
    correction: a window opening while a channel is globally disarmed fires
    that channel at its first super-threshold tick, provided it comes before
    the channel would have re-armed. Matches a from-scratch recount exactly.
    """
    params = params or HalParams()
    ch = np.atleast_2d(np.asarray(channels, dtype=float))
    n, c = ch.shape
    W = params.window_ticks
    out = np.full(n, -1, dtype=int)
    if n <= W:
        return out
    th = params.thresholds
    trig, armed_before = _run(ch, th, params.rearm_fraction)
    any_trig = trig.any(axis=1)
    prefix = np.concatenate([[0], np.cumsum(any_trig)])

    big = n + 1
    idx = np.arange(n)
    # first tick >= s with the channel above threshold / below the re-arm level
    next_above = np.where(ch > th, idx[:, None], big)
    next_below = np.where(ch < params.rearm_fraction * th, idx[:, None], big)
    next_above = np.minimum.accumulate(next_above[::-1], axis=0)[::-1]
    next_below = np.minimum.accumulate(next_below[::-1], axis=0)[::-1]
    extra = np.where(~armed_before & (next_above < next_below), next_above, big)

    ks = np.arange(W, n)
    starts = ks - W + 1
    counts = prefix[ks + 1] - prefix[starts]
    e = extra[starts]
    valid = e <= ks[:, None]
    e_safe = np.where(valid, e, 0)
    valid &= ~any_trig[e_safe]
    e = np.sort(np.where(valid, e, big), axis=1)
    distinct = (e < big) & np.concatenate([np.ones((e.shape[0], 1), bool), e[:, 1:] != e[:, :-1]], axis=1)
    out[W:] = counts + distinct.sum(axis=1)
    return out


def hal_lookup(params: HalParams, max_count: int) -> np.ndarray:
    return np.array([hal_from_count(k, params) for k in range(max_count + 1)])


def hal_from_counts(counts: np.ndarray, params: HalParams) -> np.ndarray:
    counts = np.asarray(counts)
    out = np.zeros(counts.shape)
    valid = counts >= 0
    if np.any(valid):
        table = hal_lookup(params, int(counts[valid].max()))
        out[valid] = table[counts[valid]]
    return out


def trial_channels(trial, taxel_map: TaxelMap | None = None,
                   include_palm: bool = False) -> dict[str, np.ndarray]:
    return {s: force_channels(trial.values("glove", s), taxel_map, include_palm) for s in SIDES}


def hal_counts(trial, taxel_map: TaxelMap | None = None,
               params: HalParams | None = None) -> dict[str, np.ndarray]:
    params = params or HalParams()
    if len(trial) < params.window_ticks:
        raise HalError(f"trial has {len(trial)} ticks; HAL needs at least one "
                       f"{params.work_time:g} s window ({params.window_ticks} ticks)")
    chans = trial_channels(trial, taxel_map, params.include_palm)
    return {s: sliding_counts(chans[s], params) for s in SIDES}


def hal_series(trial, taxel_map: TaxelMap | None = None,
               params: HalParams | None = None) -> ScoreSeries:
    """HAL per tick per hand; the first ``window_ticks`` values are zero padding."""
    params = params or HalParams()
    counts = hal_counts(trial, taxel_map, params)
    hal = {s: hal_from_counts(counts[s], params) for s in SIDES}
    return ScoreSeries("hal", trial.t, hal["left"], hal["right"])
