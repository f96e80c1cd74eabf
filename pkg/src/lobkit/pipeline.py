"""Turning cleaned days into labelled, normalised, class-balanced model inputs."""

from __future__ import annotations

import datetime as dt
import json
import sys
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    EmptyClass,
    HorizonTooLong,
    IndexOutOfRange,
    InsufficientHistory,
    InvalidConfig,
    MissingBest,
)
from .lobster_io import PRICE_SCALE, DaySeries

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DOWN, STABLE, UP = -1, 0, 1
CLASSES = (DOWN, STABLE, UP)
WINDOW = 100
HISTORY_DAYS = 5
EPS = 1e-8


# --- features -----------------------------------------------------------------

def day_features(day: DaySeries) -> np.ndarray:
    """(n, 4L) float64 rows ordered ask_p1, ask_v1, bid_p1, bid_v1, ... with prices in dollars.

    An absent level repeats the price of the level above it with zero volume.
    """
    if len(day) and (np.any(day.ask_price[:, 0] == 0) or np.any(day.bid_price[:, 0] == 0)):
        raise MissingBest(f"{day.stock} {day.date}: empty best level")
    n, L = day.ask_price.shape
    out = np.empty((n, 4 * L), dtype=np.float64)
    for k, (prices, vols) in enumerate(((day.ask_price, day.ask_volume),
                                        (day.bid_price, day.bid_volume))):
        p = prices.astype(np.float64)
        for lvl in range(1, L):
            hole = prices[:, lvl] == 0
            p[hole, lvl] = p[hole, lvl - 1]
        out[:, 2 * k::4] = p / PRICE_SCALE
        out[:, 2 * k + 1::4] = vols
    return out


# --- labelling ----------------------------------------------------------------

def label_events(day: DaySeries, horizon: int, theta: Optional[float] = None) -> np.ndarray:
    """Down/Stable/Up label for every snapshot tau with tau + horizon inside the day.

    The returned array has ``len(day) - horizon`` entries; entry tau labels
    snapshot tau. Comparison is exact on integer prices.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon >= len(day):
        raise HorizonTooLong(f"{day.stock} {day.date}: horizon {horizon} >= {len(day)} updates")
    theta = day.tick_size if theta is None else theta
    thr_x2 = 2 * int(round(theta * PRICE_SCALE))
    m2 = day.mid_x2()
    diff = m2[horizon:] - m2[:-horizon]
    labels = np.zeros(len(diff), dtype=np.int8)
    labels[diff <= -thr_x2] = DOWN
    labels[diff >= thr_x2] = UP
    return labels


def class_distribution(labels) -> Tuple[int, int, int]:
    labels = np.asarray(labels)
    return tuple(int(np.count_nonzero(labels == c)) for c in CLASSES)


# --- rolling z-score ------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationState:
    mean: np.ndarray
    std: np.ndarray
    eps: float
    source_dates: tuple

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / (self.std + self.eps)


@dataclass(frozen=True)
class _Moments:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def of(cls, x):
        mean = x.mean(axis=0)
        return cls(len(x), mean, ((x - mean) ** 2).sum(axis=0), x.min(axis=0), x.max(axis=0))

    def __add__(self, other):
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / n)
        return _Moments(n, mean, m2, np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def mean_std(self):
        # a feature constant over the history gets its exact value and zero spread,
        # so rounding in the running mean cannot leak through the epsilon guard
        const = self.lo == self.hi
        mean = np.where(const, self.lo, self.mean)
        std = np.where(const, 0.0, np.sqrt(self.m2 / self.count))
        return mean, std


@dataclass(frozen=True)
class NormalizedDay:
    stock: str
    date: Optional[dt.date]
    features: np.ndarray
    state: NormalizationState


def iter_normalized(days: Sequence[DaySeries], history: int = HISTORY_DAYS,
                    eps: float = EPS) -> Iterator[NormalizedDay]:
    """Z-score each day with per-feature moments of the ``history`` preceding days.

    Days must be one stock's history in chronological order; the first
    ``history`` days are burn-in and produce nothing.
    """
    days = list(days)
    if len(days) <= history:
        raise InsufficientHistory(
            f"{len(days)} days given, need at least {history + 1}")
    moments: List[_Moments] = []
    for i, day in enumerate(days):
        feats = day_features(day)
        if i >= history:
            window = moments[i - history:i]
            total = window[0]
            for m in window[1:]:
                total = total + m
            mean, std = total.mean_std()
            state = NormalizationState(mean, std, eps, tuple(d.date for d in days[i - history:i]))
            yield NormalizedDay(day.stock, day.date, state.apply(feats), state)
        moments.append(_Moments.of(feats))


def rolling_normalize(days: Sequence[DaySeries], history: int = HISTORY_DAYS,
                      eps: float = EPS) -> List[NormalizedDay]:
    return list(iter_normalized(days, history, eps))


# --- sampling and windows -------------------------------------------------------

def balanced_sample(day_labels, cap: int = 5000, rng_seed: int = 0,
                    first_index: int = WINDOW - 1) -> np.ndarray:
    """Equal-count random draw per class among positions >= ``first_index``.

    Each class contributes ``min(cap, smallest class count)`` positions drawn
    without replacement. Returns sorted snapshot indices.
    """
    labels = np.asarray(day_labels)
    candidates = np.arange(first_index, len(labels))
    per_class = [candidates[labels[first_index:] == c] for c in CLASSES]
    k = min(cap, min(len(p) for p in per_class))
    if k == 0:
        warnings.warn("a class has no representatives; nothing sampled",
                      category=RuntimeWarning)
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(rng_seed)
    picked = [rng.choice(p, size=k, replace=False) for p in per_class]
    return np.sort(np.concatenate(picked)).astype(np.int64)


def balanced_sample_strict(day_labels, cap=5000, rng_seed=0, first_index=WINDOW - 1):
    """As ``balanced_sample`` but raising ``EmptyClass`` instead of warning."""
    labels = np.asarray(day_labels)[first_index:]
    if any(np.count_nonzero(labels == c) == 0 for c in CLASSES):
        raise EmptyClass("a class has no representatives")
    return balanced_sample(day_labels, cap, rng_seed, first_index)


def valid_indices(n_labels: int) -> np.ndarray:
    """Sequential evaluation positions: every labelled snapshot with a full window."""
    return np.arange(WINDOW - 1, n_labels, dtype=np.int64)


@dataclass(frozen=True)
class LabeledWindow:
    stock: str
    day: Optional[dt.date]
    end_index: int
    features: np.ndarray    # (WINDOW, n_features), rows end_index-99 .. end_index
    horizon: int
    label: int


def window_stack(features: np.ndarray, indices) -> np.ndarray:
    """(k, WINDOW, F) view-backed stack of windows ending at ``indices``."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < WINDOW - 1 or idx.max() >= len(features)):
        raise IndexOutOfRange(f"window end indices must lie in [{WINDOW - 1}, {len(features) - 1}]")
    view = sliding_window_view(features, WINDOW, axis=0)   # (n-99, F, WINDOW)
    return view[idx - (WINDOW - 1)].transpose(0, 2, 1)


def build_windows(features: np.ndarray, selected, horizon: int, labels,
                  stock: str = "", day: Optional[dt.date] = None) -> List[LabeledWindow]:
    labels = np.asarray(labels)
    selected = np.asarray(selected, dtype=np.int64)
    if selected.size and (selected.min() < WINDOW - 1 or selected.max() >= len(labels)):
        raise IndexOutOfRange("selected index outside the labelled, full-window range")
    stack = window_stack(features, selected)
    return [LabeledWindow(stock, day, int(t), np.array(w), horizon, int(labels[t]))
            for t, w in zip(selected, stack)]


# --- window files ---------------------------------------------------------------

def window_dtype(n_features: int = 40) -> np.dtype:
    return np.dtype([
        ("stock", "S16"),
        ("day", "<i4"),            # YYYYMMDD, 0 when unknown
        ("end_index", "<i8"),
        ("horizon", "<i4"),
        ("label", "i1"),
        ("features", "<f4", (WINDOW, n_features)),
    ])


def _date_int(d):
    return 0 if d is None else d.year * 10000 + d.month * 100 + d.day


def int_date(v):
    v = int(v)
    return None if v == 0 else dt.date(v // 10000, v // 100 % 100, v % 100)


def make_records(features: np.ndarray, indices, labels, horizon: int,
                 stock: str = "", day: Optional[dt.date] = None) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    rec = np.zeros(len(indices), dtype=window_dtype(features.shape[1]))
    rec["stock"] = stock.encode()
    rec["day"] = _date_int(day)
    rec["end_index"] = indices
    rec["horizon"] = horizon
    rec["label"] = np.asarray(labels)[indices] if len(indices) else []
    rec["features"] = window_stack(features, indices)
    return rec


def records_to_windows(rec: np.ndarray) -> List[LabeledWindow]:
    return [LabeledWindow(r["stock"].decode(), int_date(r["day"]), int(r["end_index"]),
                          np.array(r["features"]), int(r["horizon"]), int(r["label"]))
            for r in rec]


def write_windows(path, records: np.ndarray, fmt: str = "bin", extra: Optional[dict] = None):
    """Write window records plus a ``<path>.json`` sidecar with counts and layout."""
    if fmt == "bin":
        records.tofile(path)
    elif fmt == "csv":
        n_feat = int(np.prod(records.dtype["features"].shape))
        head = "stock,day,end_index,horizon,label," + ",".join(f"f{i}" for i in range(n_feat))
        with open(path, "w") as fh:
            fh.write(head + "\n")
            for r in records:
                vals = ",".join(repr(float(x)) for x in r["features"].ravel())
                fh.write(f"{r['stock'].decode()},{r['day']},{r['end_index']},"
                         f"{r['horizon']},{r['label']},{vals}\n")
    else:
        raise ValueError(f"unknown window format {fmt!r}")
    down, stable, up = class_distribution(records["label"])
    sidecar = {
        "format": fmt,
        "n_records": int(len(records)),
        "window": list(records.dtype["features"].shape),
        "counts": {"down": down, "stable": stable, "up": up},
        "record_layout": [[name, records.dtype[name].str, list(records.dtype[name].shape)]
                          for name in records.dtype.names],
    }
    sidecar.update(extra or {})
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_windows(path) -> np.ndarray:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    n_features = meta["window"][1]
    dtype = window_dtype(n_features)
    if meta["format"] == "bin":
        return np.fromfile(path, dtype=dtype)
    rows = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=None, encoding="ascii")
    rows = np.atleast_1d(rows)
    rec = np.zeros(len(rows), dtype=dtype)
    for i, r in enumerate(rows):
        vals = list(r)
        rec[i]["stock"] = str(vals[0]).encode()
        rec[i]["day"], rec[i]["end_index"], rec[i]["horizon"], rec[i]["label"] = vals[1:5]
        rec[i]["features"] = np.array(vals[5:], dtype=np.float32).reshape(WINDOW, n_features)
    return rec


# --- train / validation / test calendar -------------------------------------------

def _as_date(v) -> dt.date:
    if isinstance(v, dt.datetime):
        return v.date()
    if isinstance(v, dt.date):
        return v
    return dt.date.fromisoformat(str(v))


@dataclass(frozen=True)
class SplitCalendar:
    train: Tuple[dt.date, dt.date]
    validation: Tuple[dt.date, ...]
    test: Tuple[dt.date, dt.date]

    def __post_init__(self):
        t0, t1 = self.train
        s0, s1 = self.test
        if t0 > t1 or s0 > s1:
            raise InvalidConfig("calendar ranges must have from <= to")
        if not (s0 > t1 or s1 < t0):
            raise InvalidConfig("test range overlaps the training range")
        for d in self.validation:
            if not t0 <= d <= t1:
                raise InvalidConfig(f"validation day {d} outside the training range")
            if d.weekday() >= 5:
                raise InvalidConfig(f"validation day {d} is a weekend")

    @classmethod
    def from_mapping(cls, m) -> "SplitCalendar":
        try:
            return cls(
                (_as_date(m["train"]["from"]), _as_date(m["train"]["to"])),
                tuple(sorted(_as_date(d) for d in m.get("validation", []))),
                (_as_date(m["test"]["from"]), _as_date(m["test"]["to"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad calendar: {exc}") from None

    def to_mapping(self) -> dict:
        return {
            "train": {"from": self.train[0].isoformat(), "to": self.train[1].isoformat()},
            "validation": [d.isoformat() for d in self.validation],
            "test": {"from": self.test[0].isoformat(), "to": self.test[1].isoformat()},
        }

    def split_of(self, date: dt.date) -> Optional[str]:
        if date.weekday() >= 5:
            return None
        if date in self.validation:
            return "validation"
        if self.train[0] <= date <= self.train[1]:
            return "train"
        if self.test[0] <= date <= self.test[1]:
            return "test"
        return None

    def assign(self, dates: Iterable[dt.date]) -> Dict[str, List[dt.date]]:
        out = {"train": [], "validation": [], "test": []}
        for d in sorted(set(dates)):
            s = self.split_of(d)
            if s:
                out[s].append(d)
        return out

    @classmethod
    def chronological(cls, dates: Sequence[dt.date], train_fraction: float = 2 / 3) -> "SplitCalendar":
        """Fallback when no calendar is configured: first part train, rest test."""
        dates = sorted(set(dates))
        if len(dates) < 2:
            raise InvalidConfig("need at least two days to split")
        k = min(max(1, int(round(len(dates) * train_fraction))), len(dates) - 1)
        return cls((dates[0], dates[k - 1]), (), (dates[k], dates[-1]))


def load_mapping(path) -> dict:
    """Read a JSON or TOML config file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".toml"):
        return tomllib.loads(raw.decode())
    return json.loads(raw)


# Training, validation and test days used for each year of the 2017-2019 study.
STUDY_CALENDARS = {
    2017: SplitCalendar((dt.date(2017, 3, 13), dt.date(2017, 5, 22)),
                        (dt.date(2017, 3, 23), dt.date(2017, 4, 5), dt.date(2017, 4, 13),
                         dt.date(2017, 4, 18), dt.date(2017, 5, 2)),
                        (dt.date(2017, 5, 23), dt.date(2017, 6, 6))),
    2018: SplitCalendar((dt.date(2018, 8, 9), dt.date(2018, 10, 18)),
                        (dt.date(2018, 8, 15), dt.date(2018, 8, 16), dt.date(2018, 9, 19),
                         dt.date(2018, 9, 26), dt.date(2018, 10, 3)),
                        (dt.date(2018, 10, 19), dt.date(2018, 11, 1))),
    2019: SplitCalendar((dt.date(2019, 6, 4), dt.date(2019, 8, 13)),
                        (dt.date(2019, 6, 14), dt.date(2019, 6, 27), dt.date(2019, 7, 8),
                         dt.date(2019, 7, 10), dt.date(2019, 7, 24)),
                        (dt.date(2019, 8, 14), dt.date(2019, 8, 27))),
}
