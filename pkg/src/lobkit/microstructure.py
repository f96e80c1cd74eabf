"""Microstructural statistics: tick-size class, spread/volume/depth
distributions, information richness and horizon physical-time buckets.

Every per-day statistic is a plain counter (``collections.Counter`` or an
integer array) so days can be reduced in any order.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from .errors import (
    EmptyInput,
    HorizonTooLong,
    InsufficientLevels,
    ZeroPriceChanges,
)
from .lobster_io import NASDAQ_TICK, NS_PER_SECOND, PRICE_SCALE, DaySeries, LobSnapshot

SMALL_TICK_RATIO = 3.0
LARGE_TICK_RATIO = 1.5
DEFAULT_HORIZONS = (10, 50, 100)
_RATIO_TOL = 1e-9


class TickClass(str, enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class NoMajorityWarning(UserWarning):
    pass


def yearly_tick_class(mean_spread: float, theta: float) -> TickClass:
    ratio = mean_spread / theta
    if ratio >= SMALL_TICK_RATIO - _RATIO_TOL:
        return TickClass.SMALL
    if ratio <= LARGE_TICK_RATIO + _RATIO_TOL:
        return TickClass.LARGE
    return TickClass.MEDIUM


def classify_tick_size(yearly_mean_spreads: Sequence[float], theta: float = NASDAQ_TICK) -> TickClass:
    """Majority vote of the per-year classes.

    A year is small-tick when its mean spread is at least 3 ticks and
    large-tick when it is at most 1.5 ticks. Without a strict majority the
    stock is reported as medium and a ``NoMajorityWarning`` is emitted.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    spreads = list(yearly_mean_spreads)
    if not spreads:
        raise EmptyInput("no yearly mean spreads")
    votes = Counter(yearly_tick_class(s, theta) for s in spreads)
    cls, n = votes.most_common(1)[0]
    if 2 * n > len(spreads):
        return cls
    warnings.warn(f"no majority tick class in {dict(votes)}; using medium", NoMajorityWarning)
    return TickClass.MEDIUM


# --- histograms ---------------------------------------------------------------

def normalize_counts(counts: Mapping[int, int]) -> Dict[int, float]:
    total = sum(counts.values())
    if total == 0:
        raise EmptyInput("empty histogram")
    return {k: counts[k] / total for k in sorted(counts)}


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def spread_tick_counts(day: DaySeries, theta: float = NASDAQ_TICK) -> Counter:
    ticks = _round_half_up(day.spread_ticks() / (theta * PRICE_SCALE))
    vals, cnt = np.unique(ticks, return_counts=True)
    return Counter(dict(zip(vals.tolist(), cnt.tolist())))


def spread_pdf_ticks(days: Iterable[DaySeries], theta: float = NASDAQ_TICK) -> Dict[int, float]:
    total = Counter()
    for day in days:
        total.update(spread_tick_counts(day, theta))
    if not total:
        raise EmptyInput("no snapshots")
    return normalize_counts(total)


def histogram_mode(pdf: Mapping[int, float]) -> int:
    return max(pdf, key=lambda k: (pdf[k], -k))


@dataclass(frozen=True)
class EmpiricalCCDF:
    """P(V >= v) for an empirical sample, evaluated on its sorted distinct support."""

    support: np.ndarray
    values: np.ndarray

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "EmpiricalCCDF":
        if not counts or sum(counts.values()) == 0:
            raise EmptyInput("empty sample")
        support = np.array(sorted(counts), dtype=np.int64)
        n = np.array([counts[v] for v in support], dtype=np.float64)
        tail = np.cumsum(n[::-1])[::-1]
        return cls(support, tail / tail[0])

    def __call__(self, v):
        # index of first support point >= v
        i = np.searchsorted(self.support, v, side="left")
        out = np.where(i < len(self.support), self.values[np.minimum(i, len(self.values) - 1)], 0.0)
        return float(out) if np.ndim(v) == 0 else out


@dataclass(frozen=True)
class VolumeCCDF:
    """Best-quote volume tails. Ask volumes are plotted on the negative axis."""

    ask: EmpiricalCCDF
    bid: EmpiricalCCDF

    def signed_table(self):
        rows = [(-int(v), float(p)) for v, p in zip(self.ask.support, self.ask.values)]
        rows.reverse()
        rows += [(int(v), float(p)) for v, p in zip(self.bid.support, self.bid.values)]
        return rows


def best_volume_counts(day: DaySeries) -> Tuple[Counter, Counter]:
    def count(vols):
        vols = vols[vols > 0]
        vals, cnt = np.unique(vols, return_counts=True)
        return Counter(dict(zip(vals.tolist(), cnt.tolist())))
    return count(day.ask_volume[:, 0]), count(day.bid_volume[:, 0])


def best_volume_ccdf(days: Iterable[DaySeries]) -> VolumeCCDF:
    ask, bid = Counter(), Counter()
    for day in days:
        a, b = best_volume_counts(day)
        ask.update(a)
        bid.update(b)
    if not ask or not bid:
        raise EmptyInput("no best-quote volumes")
    return VolumeCCDF(EmpiricalCCDF.from_counts(ask), EmpiricalCCDF.from_counts(bid))


# --- actual LOB depth ---------------------------------------------------------

def actual_depth(s: LobSnapshot, theta: float = NASDAQ_TICK, levels: int = 10) -> Tuple[int, int]:
    """Tick distance between level 1 and level ``levels`` on each side."""
    for side, book in (("ask", s.asks), ("bid", s.bids)):
        populated = sum(1 for lv in book[:levels] if lv is not None)
        if populated < levels:
            raise InsufficientLevels(side, populated, levels)
    unit = theta * PRICE_SCALE
    xi_ask = round((s.asks[levels - 1].price_ticks - s.asks[0].price_ticks) / unit)
    xi_bid = round((s.bids[0].price_ticks - s.bids[levels - 1].price_ticks) / unit)
    return int(xi_ask), int(xi_bid)


def depth_counts(day: DaySeries, theta: float = NASDAQ_TICK, levels: int = 10) -> Tuple[Counter, Counter]:
    """Vectorised ``actual_depth`` over a day; snapshots missing a level on a side are skipped for that side."""
    unit = theta * PRICE_SCALE
    out = []
    for prices, sign in ((day.ask_price, 1), (day.bid_price, -1)):
        if prices.shape[1] < levels:
            out.append(Counter())
            continue
        full = np.all(prices[:, :levels] != 0, axis=1)
        xi = _round_half_up(sign * (prices[full, levels - 1] - prices[full, 0]) / unit)
        vals, cnt = np.unique(xi, return_counts=True)
        out.append(Counter(dict(zip(vals.tolist(), cnt.tolist()))))
    return out[0], out[1]


def depth_pdfs(days: Iterable[DaySeries], theta: float = NASDAQ_TICK):
    ask, bid = Counter(), Counter()
    for day in days:
        a, b = depth_counts(day, theta)
        ask.update(a)
        bid.update(b)
    return normalize_counts(ask), normalize_counts(bid)


# --- information richness -----------------------------------------------------

def information_richness(n_updates: float, n_price_changes: float) -> float:
    if n_price_changes <= 0:
        raise ZeroPriceChanges("no mid-price changes")
    if n_updates <= 0:
        raise ValueError("n_updates must be positive")
    return math.log(n_updates / n_price_changes)


def count_price_changes(days: Iterable[DaySeries]) -> int:
    """Consecutive in-day snapshot pairs whose mid-price differs."""
    total = 0
    for day in days:
        m = day.mid_x2()
        total += int(np.count_nonzero(m[1:] != m[:-1]))
    return total


# --- horizon physical-time buckets ---------------------------------------------

def horizon_time_counts(day: DaySeries, horizon: int) -> np.ndarray:
    """Counts of dt = t[i+H] - t[i] in (<1s, [1s,10s), >=10s)."""
    n = len(day)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon >= n:
        raise HorizonTooLong(f"{day.stock} {day.date}: horizon {horizon} >= {n} updates")
    t = day.time_ns
    gap = t[horizon:] - t[:-horizon]
    short = int(np.count_nonzero(gap < NS_PER_SECOND))
    long_ = int(np.count_nonzero(gap >= 10 * NS_PER_SECOND))
    return np.array([short, len(gap) - short - long_, long_], dtype=np.int64)


def horizon_time_probabilities(days: Iterable[DaySeries], horizons: Sequence[int] = DEFAULT_HORIZONS):
    days = list(days)
    if not days:
        raise EmptyInput("no days")
    out = {}
    for h in horizons:
        counts = sum(horizon_time_counts(d, h) for d in days)
        out[int(h)] = tuple((counts / counts.sum()).tolist())
    return out


# --- per-year report ----------------------------------------------------------

@dataclass
class YearStats:
    """Mergeable accumulator for one (stock, year)."""

    n_updates: int = 0
    n_price_changes: int = 0
    price_sum_x2: int = 0           # sum of ask1 + bid1 in $0.0001 units
    spread_sum: int = 0             # sum of spreads in $0.0001 units
    spread_ticks: Counter = field(default_factory=Counter)
    ask_volume: Counter = field(default_factory=Counter)
    bid_volume: Counter = field(default_factory=Counter)
    depth_ask: Counter = field(default_factory=Counter)
    depth_bid: Counter = field(default_factory=Counter)
    horizon_counts: Dict[int, np.ndarray] = field(default_factory=dict)

    def add_day(self, day: DaySeries, theta=NASDAQ_TICK, horizons=DEFAULT_HORIZONS):
        m = day.mid_x2()
        sp = day.spread_ticks()
        self.n_updates += len(day)
        self.n_price_changes += int(np.count_nonzero(m[1:] != m[:-1]))
        self.price_sum_x2 += int(m.sum())
        self.spread_sum += int(sp.sum())
        self.spread_ticks.update(spread_tick_counts(day, theta))
        a, b = best_volume_counts(day)
        self.ask_volume.update(a)
        self.bid_volume.update(b)
        a, b = depth_counts(day, theta)
        self.depth_ask.update(a)
        self.depth_bid.update(b)
        for h in horizons:
            if h < len(day):
                c = horizon_time_counts(day, h)
                self.horizon_counts[h] = self.horizon_counts.get(h, 0) + c
        return self

    def merge(self, other: "YearStats") -> "YearStats":
        out = YearStats(
            self.n_updates + other.n_updates,
            self.n_price_changes + other.n_price_changes,
            self.price_sum_x2 + other.price_sum_x2,
            self.spread_sum + other.spread_sum,
        )
        for name in ("spread_ticks", "ask_volume", "bid_volume", "depth_ask", "depth_bid"):
            getattr(out, name).update(getattr(self, name))
            getattr(out, name).update(getattr(other, name))
        for h in set(self.horizon_counts) | set(other.horizon_counts):
            out.horizon_counts[h] = self.horizon_counts.get(h, 0) + other.horizon_counts.get(h, 0)
        return out

    def summary(self) -> dict:
        if self.n_updates == 0:
            raise EmptyInput("no snapshots in year")
        return {
            "mean_price": self.price_sum_x2 / (2 * PRICE_SCALE * self.n_updates),
            "mean_spread": self.spread_sum / (PRICE_SCALE * self.n_updates),
            "spread_pdf": normalize_counts(self.spread_ticks),
            "best_volume_ccdf": VolumeCCDF(EmpiricalCCDF.from_counts(self.ask_volume),
                                           EmpiricalCCDF.from_counts(self.bid_volume)),
            "depth_pdf_ask": normalize_counts(self.depth_ask) if self.depth_ask else {},
            "depth_pdf_bid": normalize_counts(self.depth_bid) if self.depth_bid else {},
            "ir": (information_richness(self.n_updates, self.n_price_changes)
                   if self.n_price_changes else float("inf")),
            "n_updates": self.n_updates,
            "n_price_changes": self.n_price_changes,
            "horizon_time_probs": {
                h: tuple((c / c.sum()).tolist()) for h, c in sorted(self.horizon_counts.items())
            },
        }


@dataclass
class MicrostructureReport:
    stock: str
    years: Dict[int, dict]
    tick_class: TickClass

    def to_json(self) -> dict:
        years = {}
        for y, e in self.years.items():
            ccdf = e["best_volume_ccdf"]
            years[str(y)] = {
                "mean_price": e["mean_price"],
                "mean_spread": e["mean_spread"],
                "spread_pdf": {str(k): v for k, v in e["spread_pdf"].items()},
                "best_volume_ccdf": [[v, p] for v, p in ccdf.signed_table()],
                "depth_pdf_ask": {str(k): v for k, v in e["depth_pdf_ask"].items()},
                "depth_pdf_bid": {str(k): v for k, v in e["depth_pdf_bid"].items()},
                "ir": e["ir"],
                "n_updates": e["n_updates"],
                "n_price_changes": e["n_price_changes"],
                "horizon_time_probs": {str(h): list(p) for h, p in e["horizon_time_probs"].items()},
            }
        return {"stock": self.stock, "tick_class": self.tick_class.value, "years": years}


def build_report(stock: str, days_by_year: Mapping[int, Iterable[DaySeries]],
                 theta: float = NASDAQ_TICK, horizons=DEFAULT_HORIZONS) -> MicrostructureReport:
    years = {}
    for year in sorted(days_by_year):
        acc = YearStats()
        for day in days_by_year[year]:
            acc.add_day(day, theta, horizons)
        years[year] = acc.summary()
    if not years:
        raise EmptyInput(f"no data for {stock}")
    cls = classify_tick_size([years[y]["mean_spread"] for y in years], theta)
    return MicrostructureReport(stock, years, cls)
