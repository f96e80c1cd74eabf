"""Reading, writing and cleaning LOBSTER message/orderbook day files.

Prices are kept as integer multiples of $0.0001 (the LOBSTER unit) all the
way through; conversion to dollars happens only at the presentation edge.
A day is held column-wise in numpy arrays, with absent book levels stored as
price 0 / volume 0.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import os
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    CrossedQuote,
    EmptyDay,
    MalformedRow,
    MissingBest,
    NonMonotoneTime,
    RowCountMismatch,
)

PRICE_SCALE = 10_000            # LOBSTER price units per dollar
NASDAQ_TICK = 0.01              # dollars
EMPTY_ASK_PRICE = 9_999_999_999
EMPTY_BID_PRICE = -9_999_999_999
NS_PER_SECOND = 1_000_000_000

SESSION_START_NS = (9 * 3600 + 40 * 60) * NS_PER_SECOND
SESSION_END_NS = (15 * 3600 + 50 * 60) * NS_PER_SECOND

MESSAGE_COLUMNS = ("time", "type", "order_id", "size", "price", "direction")

_LOBSTER_NAME = re.compile(
    r"^(?P<stock>[A-Za-z0-9.\-]+)_(?P<date>\d{4}-\d{2}-\d{2})_\d+_\d+_"
    r"(?P<kind>message|orderbook)_(?P<levels>\d+)\.csv$"
)


class EventType(enum.IntEnum):
    NEW_LIMIT = 1
    PARTIAL_CANCEL = 2
    DELETION = 3
    VISIBLE_EXECUTION = 4
    HIDDEN_EXECUTION = 5
    CROSS = 6
    HALT = 7


class Direction(enum.IntEnum):
    BUY = 1
    SELL = -1


_EVENT_CODES = frozenset(int(e) for e in EventType)


@dataclass(frozen=True)
class MessageEvent:
    time_ns: int
    event_type: EventType
    order_id: int
    size: int
    price_ticks: int
    direction: Direction


class Level(NamedTuple):
    price_ticks: int
    volume: int


@dataclass(frozen=True)
class LobSnapshot:
    """One book state. ``asks``/``bids`` hold ``Level`` or ``None`` per depth."""

    time_ns: int
    asks: tuple
    bids: tuple

    @property
    def best_ask(self) -> Optional[Level]:
        return self.asks[0] if self.asks else None

    @property
    def best_bid(self) -> Optional[Level]:
        return self.bids[0] if self.bids else None

    @classmethod
    def from_prices(cls, time_ns, asks, bids):
        """Build from ``[(price_ticks, volume), ...]`` lists, best level first."""
        return cls(
            time_ns,
            tuple(None if a is None else Level(*a) for a in asks),
            tuple(None if b is None else Level(*b) for b in bids),
        )


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DaySeries:
    """One (stock, day): book snapshots zipped 1:1 with the message that produced them."""

    stock: str
    date: Optional[dt.date]
    time_ns: np.ndarray        # (n,) int64
    ask_price: np.ndarray      # (n, L) int64, 0 where absent
    ask_volume: np.ndarray     # (n, L) int64
    bid_price: np.ndarray
    bid_volume: np.ndarray
    event_type: np.ndarray     # (n,) int8
    order_id: np.ndarray       # (n,) int64
    size: np.ndarray           # (n,) int64
    price: np.ndarray          # (n,) int64
    direction: np.ndarray      # (n,) int8
    tick_size: float = NASDAQ_TICK

    _ARRAYS = ("time_ns", "ask_price", "ask_volume", "bid_price", "bid_volume",
               "event_type", "order_id", "size", "price", "direction")

    def __post_init__(self):
        for name in self._ARRAYS:
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        n = len(self.time_ns)
        for name in self._ARRAYS:
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self):
        return len(self.time_ns)

    def __eq__(self, other):
        if not isinstance(other, DaySeries):
            return NotImplemented
        return (
            self.stock == other.stock
            and self.date == other.date
            and self.tick_size == other.tick_size
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self._ARRAYS)
        )

    __hash__ = None

    @property
    def levels(self) -> int:
        return self.ask_price.shape[1]

    @property
    def theta_ticks(self) -> int:
        return int(round(self.tick_size * PRICE_SCALE))

    def take(self, index) -> "DaySeries":
        """Row subset (boolean mask or integer indices), preserving order."""
        kw = {name: getattr(self, name)[index] for name in self._ARRAYS}
        return DaySeries(self.stock, self.date, tick_size=self.tick_size, **kw)

    def snapshot(self, i: int) -> LobSnapshot:
        def side(prices, vols):
            return tuple(
                Level(int(p), int(v)) if p != 0 else None
                for p, v in zip(prices, vols)
            )
        return LobSnapshot(
            int(self.time_ns[i]),
            side(self.ask_price[i], self.ask_volume[i]),
            side(self.bid_price[i], self.bid_volume[i]),
        )

    def event(self, i: int) -> MessageEvent:
        return MessageEvent(
            int(self.time_ns[i]),
            EventType(int(self.event_type[i])),
            int(self.order_id[i]),
            int(self.size[i]),
            int(self.price[i]),
            Direction(int(self.direction[i])),
        )

    def snapshots(self):
        return [self.snapshot(i) for i in range(len(self))]

    def mid_x2(self) -> np.ndarray:
        """ask1 + bid1 in $0.0001 units, i.e. twice the mid-price, exact."""
        a, b = self.ask_price[:, 0], self.bid_price[:, 0]
        if np.any(a == 0) or np.any(b == 0):
            bad = int(np.flatnonzero((a == 0) | (b == 0))[0])
            raise MissingBest(f"{self.stock} {self.date}: snapshot {bad} has an empty best level")
        return a + b

    def spread_ticks(self) -> np.ndarray:
        """ask1 − bid1 in $0.0001 units."""
        a, b = self.ask_price[:, 0], self.bid_price[:, 0]
        if np.any(a == 0) or np.any(b == 0):
            raise MissingBest(f"{self.stock} {self.date}: empty best level")
        return a - b


def empty_day(stock="", date=None, levels=10, tick_size=NASDAQ_TICK) -> DaySeries:
    z1 = np.zeros(0, dtype=np.int64)
    z2 = np.zeros((0, levels), dtype=np.int64)
    return DaySeries(stock, date, z1, z2, z2, z2, z2,
                     z1.astype(np.int8), z1, z1, z1, z1.astype(np.int8), tick_size)


# --- snapshot-level quantities ------------------------------------------------

def _best_pair(s: LobSnapshot):
    if s.best_ask is None or s.best_bid is None:
        raise MissingBest("snapshot has an empty best level")
    return s.best_ask.price_ticks, s.best_bid.price_ticks


def mid_price(s: LobSnapshot) -> float:
    a, b = _best_pair(s)
    return (a + b) / (2 * PRICE_SCALE)


def spread(s: LobSnapshot) -> float:
    a, b = _best_pair(s)
    if a <= b:
        raise CrossedQuote(f"ask1 {a} <= bid1 {b}")
    return (a - b) / PRICE_SCALE


# --- parsing ------------------------------------------------------------------

def parse_time_ns(text: str) -> int:
    """Seconds-after-midnight string to integer nanoseconds, without float rounding."""
    text = text.strip()
    sec, dot, frac = text.partition(".")
    if sec.isdigit() and (not dot or frac.isdigit()):
        frac = (frac + "000000000")[:9]
        return int(sec) * NS_PER_SECOND + int(frac)
    try:
        return int(Decimal(text) * NS_PER_SECOND)
    except InvalidOperation as exc:
        raise ValueError(f"bad time field {text!r}") from exc


def format_time_ns(t: int) -> str:
    return f"{t // NS_PER_SECOND}.{t % NS_PER_SECOND:09d}"


def parse_lobster_name(path):
    m = _LOBSTER_NAME.match(os.path.basename(path))
    if not m:
        return None
    return m.group("stock"), dt.date.fromisoformat(m.group("date")), m.group("kind"), int(m.group("levels"))


def lobster_names(stock, date, levels, start_s=34200, end_s=57600):
    stem = f"{stock}_{date.isoformat()}_{start_s * 1000}_{end_s * 1000}"
    return f"{stem}_message_{levels}.csv", f"{stem}_orderbook_{levels}.csv"


def _read_messages(path):
    times, rows = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 6:
                raise MalformedRow(path, lineno, f"expected 6 fields, got {len(row)}")
            try:
                t = parse_time_ns(row[0])
                vals = [int(x) for x in row[1:]]
            except ValueError as exc:
                raise MalformedRow(path, lineno, str(exc)) from None
            etype, _, size, price, direction = vals
            if etype not in _EVENT_CODES or direction not in (1, -1):
                raise MalformedRow(path, lineno, "unknown event type or direction")
            if etype != EventType.HALT and (size < 1 or price <= 0):
                raise MalformedRow(path, lineno, "non-positive size or price")
            if times and t < times[-1]:
                raise NonMonotoneTime(path, lineno)
            times.append(t)
            rows.append(vals)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 5)
    return np.array(times, dtype=np.int64), arr


def _read_orderbook(path, levels):
    ncol = 4 * levels
    try:
        with open(path) as fh:
            book = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
        if book.size == 0:
            return np.zeros((0, ncol), dtype=np.int64)
        if book.shape[1] == ncol:
            return book
    except ValueError:
        pass
    # slow path, only to locate the offending line
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if len(row) != ncol:
                raise MalformedRow(path, lineno, f"expected {ncol} fields, got {len(row)}")
            try:
                [int(x) for x in row]
            except ValueError as exc:
                raise MalformedRow(path, lineno, str(exc)) from None
    raise MalformedRow(path, 0, "unreadable orderbook file")


def _decode_side(prices, vols, sentinel):
    empty = (prices == sentinel) | (vols == 0)
    return np.where(empty, 0, prices), np.where(empty, 0, vols)


def parse_day(message_path, orderbook_path, levels: int = 10,
              stock: Optional[str] = None, date: Optional[dt.date] = None,
              tick_size: float = NASDAQ_TICK) -> DaySeries:
    """Parse a raw LOBSTER file pair into an uncleaned ``DaySeries``."""
    if stock is None or date is None:
        meta = parse_lobster_name(message_path)
        if meta is not None:
            stock = stock or meta[0]
            date = date or meta[1]
    times, msg = _read_messages(message_path)
    book = _read_orderbook(orderbook_path, levels)
    if len(times) != len(book):
        raise RowCountMismatch(len(times), len(book))
    ap, av = _decode_side(book[:, 0::4], book[:, 1::4], EMPTY_ASK_PRICE)
    bp, bv = _decode_side(book[:, 2::4], book[:, 3::4], EMPTY_BID_PRICE)
    return DaySeries(
        stock or "", date, times, ap, av, bp, bv,
        event_type=msg[:, 0].astype(np.int8), order_id=msg[:, 1], size=msg[:, 2],
        price=msg[:, 3], direction=msg[:, 4].astype(np.int8), tick_size=tick_size,
    )


def write_day(day: DaySeries, message_path, orderbook_path):
    """Write a day back out in LOBSTER format; absent levels get the sentinel codes."""
    with open(message_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i in range(len(day)):
            w.writerow((format_time_ns(int(day.time_ns[i])), int(day.event_type[i]),
                        int(day.order_id[i]), int(day.size[i]), int(day.price[i]),
                        int(day.direction[i])))
    n, L = day.ask_price.shape
    book = np.empty((n, 4 * L), dtype=np.int64)
    book[:, 0::4] = np.where(day.ask_price == 0, EMPTY_ASK_PRICE, day.ask_price)
    book[:, 1::4] = day.ask_volume
    book[:, 2::4] = np.where(day.bid_price == 0, EMPTY_BID_PRICE, day.bid_price)
    book[:, 3::4] = day.bid_volume
    with open(orderbook_path, "w") as fh:
        np.savetxt(fh, book, fmt="%d", delimiter=",")


def save_day(day: DaySeries, out_dir, fmt="csv"):
    """Dump a day as a LOBSTER csv pair or a columnar ``.npz``. Returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "csv":
        msg_name, ob_name = lobster_names(day.stock, day.date, day.levels)
        paths = (os.path.join(out_dir, msg_name), os.path.join(out_dir, ob_name))
        write_day(day, *paths)
        return paths
    if fmt == "bin":
        path = os.path.join(out_dir, f"{day.stock}_{day.date.isoformat()}_clean.npz")
        cols = {name: getattr(day, name) for name in DaySeries._ARRAYS}
        np.savez(path, stock=np.array(day.stock), date=np.array(day.date.isoformat()),
                 tick_size=np.array(day.tick_size), **cols)
        return (path,)
    raise ValueError(f"unknown output format {fmt!r}")


def load_day_bin(path) -> DaySeries:
    with np.load(path) as z:
        cols = {name: z[name] for name in DaySeries._ARRAYS}
        return DaySeries(str(z["stock"]), dt.date.fromisoformat(str(z["date"])),
                         tick_size=float(z["tick_size"]), **cols)


@dataclass(frozen=True)
class DayFiles:
    stock: str
    date: dt.date
    levels: int
    paths: tuple = field(default=())
    fmt: str = "csv"

    def load(self, tick_size=NASDAQ_TICK) -> DaySeries:
        if self.fmt == "bin":
            return load_day_bin(self.paths[0])
        return parse_day(self.paths[0], self.paths[1], self.levels,
                         self.stock, self.date, tick_size)


def discover_days(root, stocks=None):
    """Find every LOBSTER pair or ``*_clean.npz`` under ``root``, sorted by (stock, date)."""
    found = {}
    for name in sorted(os.listdir(root)):
        path = os.path.join(root, name)
        if name.endswith("_clean.npz"):
            stock, date = name[: -len("_clean.npz")].rsplit("_", 1)
            found[(stock, dt.date.fromisoformat(date))] = DayFiles(
                stock, dt.date.fromisoformat(date), 0, (path,), "bin")
            continue
        meta = parse_lobster_name(name)
        if meta is None or meta[2] != "message":
            continue
        stock, date, _, levels = meta
        ob = os.path.join(root, name.replace("_message_", "_orderbook_"))
        if os.path.exists(ob):
            found[(stock, date)] = DayFiles(stock, date, levels, (path, ob))
    out = [found[k] for k in sorted(found)]
    if stocks:
        out = [d for d in out if d.stock in set(stocks)]
    return out


# --- cleaning -----------------------------------------------------------------

def drop_crossed(day: DaySeries) -> DaySeries:
    """Remove crossed and locked snapshots (ask1 <= bid1, both sides present)."""
    a, b = day.ask_price[:, 0], day.bid_price[:, 0]
    bad = (a != 0) & (b != 0) & (a <= b)
    return day.take(~bad) if bad.any() else day


def collapse_timestamps(day: DaySeries) -> DaySeries:
    """Keep only the last snapshot of every run of identical timestamps."""
    t = day.time_ns
    if len(t) < 2:
        return day
    keep = np.ones(len(t), dtype=bool)
    keep[:-1] = t[1:] != t[:-1]
    return day if keep.all() else day.take(keep)


def trim_session(day: DaySeries, start_ns=SESSION_START_NS, end_ns=SESSION_END_NS) -> DaySeries:
    inside = (day.time_ns >= start_ns) & (day.time_ns <= end_ns)
    return day if inside.all() else day.take(inside)


def clean_day(raw: DaySeries) -> DaySeries:
    day = trim_session(collapse_timestamps(drop_crossed(raw)))
    if len(day) == 0:
        raise EmptyDay(f"{raw.stock} {raw.date}: nothing survives cleaning")
    return day
