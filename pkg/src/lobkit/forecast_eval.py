"""Scoring forecast streams: classification metrics and transaction matching.

A transaction is an opened position that is later closed by the opposite
signal. Target-side transactions (PT) and prediction-side transactions (TT)
are matched exactly on (open index, close index, side); p_T is the Jaccard
index of the two sets.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import DegenerateSeries, EmptyMatrix, LengthMismatch, DataError

DOWN, STABLE, UP = -1, 0, 1
CLASSES = (DOWN, STABLE, UP)
DEFAULT_THRESHOLDS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


# --- classification metrics ----------------------------------------------------

def confusion_matrix(targets, predictions) -> np.ndarray:
    """3x3 counts, rows = target class, columns = predicted class, order Down/Stable/Up."""
    t = np.asarray(targets, dtype=np.int64)
    p = np.asarray(predictions, dtype=np.int64)
    if len(t) != len(p):
        raise LengthMismatch(len(t), len(p), "targets and predictions")
    cm = np.zeros((3, 3), dtype=np.int64)
    np.add.at(cm, (t + 1, p + 1), 1)
    return cm


def average_confusion(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of count matrices, then each row scaled to sum to 1 (empty rows stay 0)."""
    if len(matrices) == 0:
        raise EmptyMatrix("no matrices to average")
    mean = np.mean(np.asarray(matrices, dtype=np.float64), axis=0)
    rows = mean.sum(axis=1, keepdims=True)
    return np.divide(mean, rows, out=np.zeros_like(mean), where=rows > 0)


def _check(cm):
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    if s <= 0:
        raise EmptyMatrix("confusion matrix has no entries")
    return cm, s


def mcc(cm) -> float:
    """Multiclass Matthews correlation (Gorodkin); 0 when a marginal is degenerate."""
    cm, s = _check(cm)
    c = np.trace(cm)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    cov_tp = c * s - p @ t
    var_p = s * s - p @ p
    var_t = s * s - t @ t
    if var_p == 0 or var_t == 0:
        return 0.0
    return float(cov_tp / math.sqrt(var_p * var_t))


def f1_and_accuracy(cm) -> Tuple[float, float]:
    """Macro F1 (classes without support or predictions score 0) and accuracy."""
    cm, s = _check(cm)
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    f1 = np.divide(2 * tp, denom, out=np.zeros(3), where=denom > 0)
    return float(f1.mean()), float(tp.sum() / s)


# --- forecasts ----------------------------------------------------------------

class ForecastRecord(NamedTuple):
    index: int
    probs: Tuple[float, float, float]   # (p_down, p_stable, p_up)


def validate_probs(probs, tol=1e-6):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != 3:
        raise DataError(f"probabilities must have shape (n, 3), got {probs.shape}")
    if np.any(probs < 0) or np.any(probs > 1) or np.any(np.abs(probs.sum(axis=1) - 1) > tol):
        raise DataError("each probability row must lie in [0, 1] and sum to 1")
    return probs


def hard_predictions(probs) -> np.ndarray:
    return np.argmax(np.asarray(probs), axis=1).astype(np.int64) - 1


def threshold_filter(probs, threshold: float):
    """Keep forecasts whose top class probability reaches ``threshold``.

    Returns ``(kept_positions, kept_classes, remaining_fraction)``; positions
    index into ``probs``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    top = probs.max(axis=1)
    kept = np.flatnonzero(top >= threshold)
    frac = len(kept) / len(probs) if len(probs) else 0.0
    return kept, hard_predictions(probs[kept]), frac


def thresholded_signal(probs, threshold: float) -> np.ndarray:
    """Hard predictions with sub-threshold forecasts replaced by 0 (no action)."""
    probs = np.asarray(probs, dtype=np.float64)
    sig = hard_predictions(probs)
    sig[probs.max(axis=1) < threshold] = STABLE
    return sig


# --- transactions -------------------------------------------------------------

class Side(str, enum.Enum):
    SELL_FIRST = "sell_first"
    BUY_FIRST = "buy_first"


class Transaction(NamedTuple):
    open_index: int
    close_index: int
    side: Side


@dataclass
class TransactionTrace:
    transactions: List[Transaction] = field(default_factory=list)
    n_opened: int = 0
    n_closed: int = 0


def trace_transactions(labels, indices=None) -> TransactionTrace:
    """Single pass of the open / maintain / close position machine over a label stream."""
    labels = np.asarray(labels)
    indices = np.arange(len(labels)) if indices is None else np.asarray(indices)
    if len(indices) != len(labels):
        raise LengthMismatch(len(labels), len(indices), "labels and indices")
    out = TransactionTrace()
    pos, opened_at = 0, -1
    for i, lab in zip(indices.tolist(), labels.tolist()):
        if lab == 0 or lab == pos:
            continue
        if pos != 0:
            side = Side.SELL_FIRST if pos == DOWN else Side.BUY_FIRST
            out.transactions.append(Transaction(opened_at, i, side))
            out.n_closed += 1
        pos, opened_at = lab, i
        out.n_opened += 1
    return out


def extract_transactions(labels, indices=None) -> List[Transaction]:
    return trace_transactions(labels, indices).transactions


class TransactionScore(NamedTuple):
    pt: int
    tt: int
    ct: int
    p_t: float


def _segments(n, segments):
    if segments is None:
        return [slice(0, n)]
    seg = np.asarray(segments)
    if len(seg) != n:
        raise LengthMismatch(n, len(seg), "stream and segment ids")
    cuts = np.flatnonzero(seg[1:] != seg[:-1]) + 1
    bounds = np.concatenate([[0], cuts, [n]])
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def transaction_sets(targets, signal, indices=None, segments=None):
    """Target and prediction transaction sets; positions never carry across segments."""
    targets = np.asarray(targets)
    signal = np.asarray(signal)
    if len(targets) != len(signal):
        raise LengthMismatch(len(targets), len(signal), "targets and predictions")
    indices = np.arange(len(targets)) if indices is None else np.asarray(indices)
    pt, tt = set(), set()
    for sl in _segments(len(targets), segments):
        pt.update(extract_transactions(targets[sl], indices[sl]))
        tt.update(extract_transactions(signal[sl], indices[sl]))
    return pt, tt


def p_t_from_counts(pt: int, tt: int, ct: int) -> float:
    union = pt + tt - ct
    return 1.0 if union == 0 else ct / union


def score_transactions(targets, signal, indices=None, segments=None) -> TransactionScore:
    pt, tt = transaction_sets(targets, signal, indices, segments)
    ct = len(pt & tt)
    return TransactionScore(len(pt), len(tt), ct, p_t_from_counts(len(pt), len(tt), ct))


def transaction_metrics(targets, probs, threshold: float = 0.3, indices=None,
                        segments=None) -> TransactionScore:
    """PT, TT, CT and p_T for a probability stream at one confidence threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    if len(targets) != len(probs):
        raise LengthMismatch(len(targets), len(probs), "targets and forecasts")
    return score_transactions(targets, thresholded_signal(probs, threshold), indices, segments)


# --- significance -------------------------------------------------------------

def star_mark(p_value: float) -> str:
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


def per_day_significance(daily_values) -> Tuple[float, float, str]:
    """Two-sided one-sample t-test of daily metric values against zero."""
    x = np.asarray(daily_values, dtype=np.float64)
    if len(x) < 2 or np.ptp(x) == 0:
        raise DegenerateSeries("need at least two non-constant daily values")
    from scipy import stats

    res = stats.ttest_1samp(x, 0.0)
    return float(res.statistic), float(res.pvalue), star_mark(float(res.pvalue))


# --- sweep --------------------------------------------------------------------

def parse_thresholds(text: str) -> Tuple[float, ...]:
    """``"0.3:0.9:0.1"`` (inclusive range) or ``"0.3,0.5,0.7"``."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        vals = [round(lo + i * step, 10) for i in range(n)]
    else:
        vals = [float(x) for x in text.split(",") if x.strip()]
    for v in vals:
        if not 0.3 - 1e-12 <= v < 1:
            raise ValueError(f"threshold {v} outside [0.3, 1)")
    return tuple(vals)


def _metrics_block(targets, probs, threshold, indices, segments):
    kept, preds, frac = threshold_filter(probs, threshold)
    cm = confusion_matrix(targets[kept], preds)
    if len(kept):
        f1, acc = f1_and_accuracy(cm)
        m = mcc(cm)
    else:
        f1 = acc = m = None
    ts = transaction_metrics(targets, probs, threshold, indices, segments)
    return {
        "threshold": threshold,
        "confusion_matrix": cm.tolist(),
        "mcc": m,
        "f1_macro": f1,
        "accuracy": acc,
        "remaining_fraction": frac,
        "n_kept": int(len(kept)),
        "PT": ts.pt,
        "TT": ts.tt,
        "CT": ts.ct,
        "p_T": ts.p_t,
        "empty_union": ts.pt + ts.tt - ts.ct == 0,
    }


def evaluate(targets, probs, thresholds=DEFAULT_THRESHOLDS, indices=None, days=None) -> dict:
    """Full sweep report. ``days`` (one id per record) enables per-day series and t-tests."""
    targets = np.asarray(targets, dtype=np.int64)
    probs = validate_probs(probs)
    if len(targets) != len(probs):
        raise LengthMismatch(len(targets), len(probs), "targets and forecasts")
    indices = np.arange(len(targets)) if indices is None else np.asarray(indices)
    report = {"n_records": int(len(targets)), "thresholds": []}
    for thr in thresholds:
        block = _metrics_block(targets, probs, thr, indices, days)
        if days is not None:
            per_day = {}
            for sl in _segments(len(targets), days):
                day_id = str(np.asarray(days)[sl.start])
                per_day[day_id] = _metrics_block(targets[sl], probs[sl], thr, indices[sl], None)
            series = [b["mcc"] for b in per_day.values() if b["mcc"] is not None]
            try:
                t_stat, p_val, mark = per_day_significance(series)
                block["significance"] = {"t": t_stat, "p_value": p_val, "mark": mark}
            except DegenerateSeries:
                block["significance"] = None
            block["daily"] = {k: {m: v[m] for m in ("mcc", "f1_macro", "accuracy",
                                                     "remaining_fraction", "p_T")}
                              for k, v in per_day.items()}
        report["thresholds"].append(block)
    return report


# --- file formats -------------------------------------------------------------

def write_predictions(path, indices, probs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "p_down", "p_stable", "p_up"))
        for i, p in zip(np.asarray(indices).tolist(), np.asarray(probs, dtype=np.float64)):
            w.writerow((i, *(repr(float(x)) for x in p)))


def read_predictions(path) -> Tuple[np.ndarray, np.ndarray]:
    idx, probs = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"index", "p_down", "p_stable", "p_up"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            idx.append(int(row["index"]))
            probs.append((float(row["p_down"]), float(row["p_stable"]), float(row["p_up"])))
    idx = np.array(idx, dtype=np.int64)
    if np.any(np.diff(idx) <= 0):
        raise DataError(f"{path}: indices must be strictly increasing")
    return idx, validate_probs(np.array(probs).reshape(-1, 3))


def write_targets(path, indices, labels, days=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "label", "day"))
        days = [""] * len(labels) if days is None else days
        for i, lab, d in zip(np.asarray(indices).tolist(), np.asarray(labels).tolist(), days):
            w.writerow((i, lab, d))


def read_targets(path):
    idx, labels, days = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            idx.append(int(row["index"]))
            lab = int(row["label"])
            if lab not in CLASSES:
                raise DataError(f"{path}: label {lab} not in -1/0/1")
            labels.append(lab)
            days.append(row.get("day") or "")
    has_days = any(days)
    return (np.array(idx, dtype=np.int64), np.array(labels, dtype=np.int64),
            np.array(days) if has_days else None)
