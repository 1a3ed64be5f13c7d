"""Risk binning, leave-one-participant-out validation and report tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np

from .errors import EvaluationError
from .hal import HalParams
from .ml.datasets import Samples, hal_samples, rula_samples
from .ml.gbdt import GbdtConfig, predict_gbdt, train_gbdt
from .ml.gru import GruConfig, train_gru
from .rula import FEATURES, RulaAdjustments
from .streams import SIDES, TOOLS
from .taxels import TaxelMap

MODEL_KINDS = ("rula_gbdt", "hal_gru")


class RiskLevel(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.lower()


def bin_rula(score) -> RiskLevel:
    s = int(score)
    if s != score or not 1 <= s <= 7:
        raise EvaluationError(f"RULA score {score!r} outside 1..7")
    return RiskLevel.LOW if s <= 3 else RiskLevel.MEDIUM if s <= 5 else RiskLevel.HIGH


def bin_hal(score) -> RiskLevel:
    s = float(score)
    if not 0.0 <= s <= 10.0:
        raise EvaluationError(f"HAL score {score!r} outside [0, 10]")
    return RiskLevel.LOW if s < 4.0 else RiskLevel.MEDIUM if s < 8.0 else RiskLevel.HIGH


def bin_rula_array(scores) -> np.ndarray:
    s = np.asarray(scores)
    if s.size and (s.min() < 1 or s.max() > 7 or np.any(s != np.round(s))):
        raise EvaluationError("RULA scores must be integers in 1..7")
    return np.where(s <= 3, 0, np.where(s <= 5, 1, 2))


def bin_hal_array(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.size and (s.min() < 0 or s.max() > 10):
        raise EvaluationError("HAL scores must lie in [0, 10]")
    return np.digitize(s, [4.0, 8.0])


@dataclass(frozen=True)
class ConservativeReport:
    pct_correct_or_conservative: float
    pct_off_by_one: float
    pct_off_by_two: float
    n: int = 0


def classification_report(predicted, truth) -> ConservativeReport:
    """Percent exact-or-one-higher, one-lower and two-apart."""
    p = np.asarray([int(x) for x in predicted], dtype=int)
    t = np.asarray([int(x) for x in truth], dtype=int)
    if p.size != t.size:
        raise EvaluationError(f"{p.size} predictions for {t.size} truth labels")
    if p.size == 0:
        raise EvaluationError("empty prediction set")
    d = p - t
    n = d.size
    ok = np.count_nonzero((d == 0) | (d == 1))
    low = np.count_nonzero(d == -1)
    two = np.count_nonzero(np.abs(d) == 2)
    return ConservativeReport(100.0 * ok / n, 100.0 * low / n, 100.0 * two / n, n)


@dataclass(frozen=True)
class HoldoutRun:
    held_out: str
    tool: str
    side: str
    model_kind: str
    report: ConservativeReport
    accuracy: float = float("nan")

    def row(self) -> dict:
        return {"participant": self.held_out, "tool": self.tool, "side": self.side,
                "model": self.model_kind,
                "correct_or_conservative": self.report.pct_correct_or_conservative,
                "off_by_one": self.report.pct_off_by_one,
                "off_by_two": self.report.pct_off_by_two,
                "exact": self.accuracy, "n": self.report.n}


@dataclass(frozen=True)
class EvalConfig:
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    gru: GruConfig = field(default_factory=GruConfig)
    hal: HalParams = field(default_factory=HalParams)
    adjustments: RulaAdjustments = field(default_factory=RulaAdjustments)
    rula_stride: int = 1
    hal_train_stride_s: float = 1.0
    # None scores every tick from the first full window on
    hal_eval_stride_s: float | None = None


def check_disjoint(train_ids, test_ids) -> None:
    overlap = set(train_ids) & set(test_ids)
    if overlap:
        raise EvaluationError(f"participants {sorted(overlap)} appear in both training and test data")


def majority_baseline(train_labels, test_labels) -> float:
    """Exact accuracy of always predicting the most common training label."""
    counts = np.bincount(np.asarray(train_labels, dtype=int), minlength=3)
    guess = int(np.argmax(counts))
    return float(np.mean(np.asarray(test_labels, dtype=int) == guess))


def _participants(trials) -> list[str]:
    ids = sorted({t.participant_id for t in trials})
    if len(ids) < 2:
        raise EvaluationError("leave-one-out needs at least two participants")
    return ids


def _runs(held: str, kind: str, test: Samples, pred: np.ndarray, truth: np.ndarray) -> list[HoldoutRun]:
    runs = []
    for tool in [t for t in TOOLS if np.any(test.tool == t)]:
        for side in SIDES:
            m = (test.tool == tool) & (test.side == side)
            if not np.any(m):
                continue
            rep = classification_report(pred[m], truth[m])
            runs.append(HoldoutRun(held, tool, side, kind, rep, float(np.mean(pred[m] == truth[m]))))
    return runs


def fit_rula_models(train: Samples, cfg: EvalConfig) -> dict:
    models = {}
    for side in SIDES:
        part = train.select(train.side == side)
        models[side] = train_gbdt(part.X, bin_rula_array(part.y), cfg.gbdt, FEATURES)
    return models


def predict_rula_models(models: dict, test: Samples) -> np.ndarray:
    pred = np.zeros(len(test), dtype=int)
    for side in SIDES:
        m = test.side == side
        if np.any(m):
            pred[m] = predict_gbdt(models[side], test.X[m])[0]
    return pred


def leave_one_out(trials, model_kind: str, cfg: EvalConfig | None = None,
                  taxel_map: TaxelMap | None = None, progress=None) -> list[HoldoutRun]:
    """Hold out each participant in turn, train on the rest, report per (tool, side)."""
    cfg = cfg or EvalConfig()
    if model_kind not in MODEL_KINDS:
        raise EvaluationError(f"model kind must be one of {MODEL_KINDS}")
    ids = _participants(trials)
    runs: list[HoldoutRun] = []
    if model_kind == "rula_gbdt":
        data = Samples.concat([rula_samples(t, cfg.adjustments, cfg.rula_stride) for t in trials])
        for held in ids:
            train = data.select(data.participant != held)
            test = data.select(data.participant == held)
            check_disjoint(train.participant, test.participant)
            models = fit_rula_models(train, cfg)
            pred = predict_rula_models(models, test)
            runs += _runs(held, model_kind, test, pred, bin_rula_array(test.y))
            if progress:
                progress(held)
        return runs
    train_data = Samples.concat([hal_samples(t, taxel_map, cfg.hal, cfg.hal_train_stride_s)
                                 for t in trials])
    for held in ids:
        train = train_data.select(train_data.participant != held)
        test = Samples.concat([hal_samples(t, taxel_map, cfg.hal, cfg.hal_eval_stride_s)
                               for t in trials if t.participant_id == held])
        check_disjoint(train.participant, test.participant)
        model = train_gru(train.X, train.y, cfg.gru)
        pred = bin_hal_array(model.predict(test.X))
        runs += _runs(held, model_kind, test, pred, bin_hal_array(test.y))
        if progress:
            progress(held)
    return runs


# -- report output ------------------------------------------------------------

COLUMNS = ("participant", "tool", "side", "model", "correct_or_conservative",
           "off_by_one", "off_by_two", "exact", "n")
TITLES = ("Participant", "Tool", "Side", "Model", "Correct or conservative (%)",
          "Off by one (%)", "Off by two (%)", "Exact (%)", "N")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def report_csv(runs: list[HoldoutRun]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in runs:
        row = r.row()
        row["exact"] = 100.0 * row["exact"]
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def report_text(runs: list[HoldoutRun]) -> str:
    """Aligned table, one row per held-out participant, tool and side."""
    rows = [list(TITLES)]
    for r in runs:
        row = r.row()
        row["exact"] = 100.0 * row["exact"]
        rows.append([_fmt(row[c]) for c in COLUMNS])
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(w) if i < 4 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_json(runs: list[HoldoutRun], meta: dict | None = None) -> str:
    d = {"meta": meta or {}, "runs": [r.row() | {"report": asdict(r.report)} for r in runs]}
    if runs:
        d["min_correct_or_conservative"] = min(r.report.pct_correct_or_conservative for r in runs)
    return json.dumps(d, indent=1, sort_keys=True) + "\n"
