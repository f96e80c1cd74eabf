"""Zero-intelligence order flow producing LOBSTER-format day files.

Limit orders, cancellations and market orders arrive as a Poisson stream.
Cancellations are per resting order, so the book size settles where
submissions balance removals. The regime only changes where limit orders
are placed and how large they are, which is enough to pin the spread near
one tick (large-tick) or let it open up over several ticks (small-tick).
"""

from __future__ import annotations

import bisect
import datetime as dt
import enum
import os
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import InvalidConfig
from .lobster_io import (
    NS_PER_SECOND,
    PRICE_SCALE,
    DaySeries,
    EventType,
    lobster_names,
    write_day,
)

TICK = PRICE_SCALE // 100       # $0.01 in LOBSTER price units


class Regime(str, enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


@dataclass(frozen=True)
class RegimeParams:
    limit_weight: float       # relative rate of limit submissions
    market_weight: float      # relative rate of market orders
    cancel_per_order: float   # cancellation rate per resting order
    improve_prob: float       # chance a limit order lands inside a wide spread
    depth_decay: float        # geometric parameter of the passive offset (ticks behind best)
    depth_span: int           # passive offsets are truncated to [0, depth_span) ticks
    size_range: tuple         # (min, max) shares per limit order
    market_size_range: tuple


REGIMES = {
    Regime.LARGE: RegimeParams(1.0, 0.10, 0.02, 0.95, 0.02, 12, (100, 1000), (200, 1000)),
    Regime.MEDIUM: RegimeParams(1.0, 0.22, 0.05, 0.10, 0.12, 40, (1, 200), (20, 200)),
    Regime.SMALL: RegimeParams(1.0, 0.30, 0.05, 0.20, 0.08, 60, (1, 100), (100, 300)),
}


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    regime: Regime = Regime.LARGE
    rate: float = 50.0                       # events per second
    initial_mid: float = 50.0                # dollars
    levels: int = 10
    session_start_ns: int = (9 * 3600 + 30 * 60) * NS_PER_SECOND
    session_end_ns: int = 16 * 3600 * NS_PER_SECOND
    max_events: Optional[int] = None
    crossed_fraction: float = 0.0
    duplicate_fraction: float = 0.0
    stock: str = "SYN"
    date: dt.date = dt.date(2019, 6, 3)

    def validate(self):
        if not self.rate > 0:
            raise InvalidConfig("rate must be positive")
        if not self.initial_mid > 1:
            raise InvalidConfig("initial mid must exceed $1")
        if self.levels < 1:
            raise InvalidConfig("levels must be >= 1")
        if self.session_end_ns <= self.session_start_ns:
            raise InvalidConfig("empty session")
        if self.max_events is not None and self.max_events < 1:
            raise InvalidConfig("max_events must be positive")
        for f in (self.crossed_fraction, self.duplicate_fraction):
            if not 0 <= f < 0.25:
                raise InvalidConfig("defect fractions must lie in [0, 0.25)")
        try:
            Regime(self.regime)
        except ValueError:
            raise InvalidConfig(f"unknown regime {self.regime!r}") from None


@dataclass
class DefectLog:
    crossed_rows: List[int] = field(default_factory=list)
    duplicate_rows: List[int] = field(default_factory=list)   # row i copies the time of row i-1


@dataclass
class SyntheticDay:
    day: DaySeries
    defects: DefectLog


class _Side:
    """One side of the book: price levels holding FIFO queues of order ids."""

    def __init__(self, is_ask):
        self.is_ask = is_ask
        self.prices: List[int] = []          # ascending
        self.queues = {}
        self.volume = {}
        self.live: List[int] = []
        self.pos = {}

    def best(self):
        if not self.prices:
            return None
        return self.prices[0] if self.is_ask else self.prices[-1]

    def worst(self):
        return self.prices[-1] if self.is_ask else self.prices[0]

    def top(self, n):
        return self.prices[:n] if self.is_ask else self.prices[::-1][:n]

    def add(self, oid, price, size):
        q = self.queues.get(price)
        if q is None:
            bisect.insort(self.prices, price)
            q = self.queues[price] = deque()
            self.volume[price] = 0
        q.append(oid)
        self.volume[price] += size
        self.pos[oid] = len(self.live)
        self.live.append(oid)

    def remove(self, oid, price, size, front=False):
        q = self.queues[price]
        if front:
            q.popleft()
        else:
            q.remove(oid)
        self.volume[price] -= size
        if not q:
            del self.queues[price], self.volume[price]
            self.prices.pop(bisect.bisect_left(self.prices, price))
        i = self.pos.pop(oid)
        last = self.live.pop()
        if last != oid:
            self.live[i] = last
            self.pos[last] = i


class _Book:
    def __init__(self, params: RegimeParams, levels: int, rng: np.random.Generator):
        self.p = params
        self.levels = levels
        self.rng = rng
        self.ask = _Side(True)
        self.bid = _Side(False)
        self.orders = {}       # id -> [is_ask, price, size]
        self.next_id = 1

    def _size(self, rng_range):
        lo, hi = rng_range
        return int(self.rng.integers(lo, hi + 1))

    def place(self, is_ask, price, size):
        oid = self.next_id
        self.next_id += 1
        self.orders[oid] = [is_ask, price, size]
        (self.ask if is_ask else self.bid).add(oid, price, size)
        return oid

    def seed_book(self, mid_ticks, n_levels):
        a0 = (mid_ticks // TICK + 1) * TICK
        for is_ask, start, step in ((True, a0, TICK), (False, a0 - TICK, -TICK)):
            price = start
            for _ in range(n_levels):
                for _ in range(3):
                    self.place(is_ask, price, self._size(self.p.size_range))
                price += step * int(self.rng.geometric(min(1.0, 2 * self.p.depth_decay)))

    def passive_price(self, is_ask):
        side = self.ask if is_ask else self.bid
        other = self.bid if is_ask else self.ask
        best, opp = side.best(), other.best()
        gap = (best - opp) if is_ask else (opp - best)
        if gap > TICK and self.rng.random() < self.p.improve_prob:
            k = int(self.rng.integers(1, gap // TICK))
            return opp + k * TICK if is_ask else opp - k * TICK
        k = (int(self.rng.geometric(self.p.depth_decay)) - 1) % self.p.depth_span
        price = best + k * TICK if is_ask else best - k * TICK
        return max(price, TICK)

    def refill_price(self, is_ask):
        side = self.ask if is_ask else self.bid
        k = int(self.rng.geometric(min(1.0, self.p.depth_decay * 2)))
        price = side.worst() + k * TICK if is_ask else side.worst() - k * TICK
        return max(price, TICK)

    def limit(self, is_ask, price=None):
        price = self.passive_price(is_ask) if price is None else price
        size = self._size(self.p.size_range)
        oid = self.place(is_ask, price, size)
        return EventType.NEW_LIMIT, oid, size, price, -1 if is_ask else 1

    def cancel(self, is_ask):
        side = self.ask if is_ask else self.bid
        oid = side.live[int(self.rng.integers(len(side.live)))]
        _, price, size = self.orders[oid]
        if size > 1 and self.rng.random() < 0.25:
            cut = int(self.rng.integers(1, size))
            self.orders[oid][2] -= cut
            side.volume[price] -= cut
            return EventType.PARTIAL_CANCEL, oid, cut, price, -1 if is_ask else 1
        side.remove(oid, price, size)
        del self.orders[oid]
        return EventType.DELETION, oid, size, price, -1 if is_ask else 1

    def market(self, hits_ask):
        side = self.ask if hits_ask else self.bid
        price = side.best()
        oid = side.queues[price][0]
        rest = self.orders[oid]
        size = min(rest[2], self._size(self.p.market_size_range))
        if size == rest[2]:
            side.remove(oid, price, size, front=True)
            del self.orders[oid]
        else:
            rest[2] -= size
            side.volume[price] -= size
        return EventType.VISIBLE_EXECUTION, oid, size, price, -1 if hits_ask else 1

    def row(self, out):
        L = self.levels
        for k, side in enumerate((self.ask, self.bid)):
            top = side.top(L)
            for lvl, price in enumerate(top):
                out[2 * k][lvl] = price
                out[2 * k + 1][lvl] = side.volume[price]
            for lvl in range(len(top), L):
                out[2 * k][lvl] = 0
                out[2 * k + 1][lvl] = 0


def _pick_defects(rng, n, n_crossed, n_dup):
    """Disjoint defect rows at least three apart, so each defect is removed on its own."""
    taken = set()
    chosen = []
    for i in rng.permutation(np.arange(2, max(n - 1, 2))).tolist():
        if len(chosen) == n_crossed + n_dup:
            break
        if any(j in taken for j in range(i - 2, i + 3)):
            continue
        taken.add(i)
        chosen.append(i)
    return sorted(chosen[:n_crossed]), sorted(chosen[n_crossed:])


def generate_day(config: GeneratorConfig) -> SyntheticDay:
    """Simulate one day; deterministic given ``config.seed``."""
    config.validate()
    params = REGIMES[Regime(config.regime)]
    rng = np.random.default_rng(config.seed)
    book = _Book(params, config.levels, rng)
    book.seed_book(int(round(config.initial_mid * PRICE_SCALE)), config.levels + 5)

    L = config.levels
    times, msgs = [], []
    rows = [[], [], [], []]
    scratch = [[0] * L for _ in range(4)]
    t = config.session_start_ns
    mean_gap = NS_PER_SECOND / config.rate
    limit_n = config.max_events if config.max_events is not None else float("inf")
    pending_refill = None
    while len(times) < limit_n:
        t += max(1, int(round(rng.exponential(mean_gap))))
        if t > config.session_end_ns:
            break
        if pending_refill is not None:
            is_ask = pending_refill
            ev = book.limit(is_ask, book.refill_price(is_ask))
        else:
            is_ask = bool(rng.random() < 0.5)
            side = book.ask if is_ask else book.bid
            w_lim = params.limit_weight
            w_mkt = params.market_weight
            w_can = params.cancel_per_order * len(side.live)
            u = rng.random() * (w_lim + w_mkt + w_can)
            if u < w_lim:
                ev = book.limit(is_ask)
            elif u < w_lim + w_mkt:
                ev = book.market(is_ask)
            else:
                ev = book.cancel(is_ask)
        pending_refill = None
        for ask_side, side in ((True, book.ask), (False, book.bid)):
            if len(side.prices) < L:
                pending_refill = ask_side
        times.append(t)
        msgs.append(ev)
        book.row(scratch)
        for k in range(4):
            rows[k].append(list(scratch[k]))

    n = len(times)
    time_ns = np.array(times, dtype=np.int64)
    msg = np.array([(int(e[0]), e[1], e[2], e[3], e[4]) for e in msgs], dtype=np.int64).reshape(-1, 5)
    ap, av, bp, bv = (np.array(r, dtype=np.int64).reshape(-1, L) for r in rows)

    log = DefectLog()
    if n > 4 and (config.crossed_fraction or config.duplicate_fraction):
        log.crossed_rows, log.duplicate_rows = _pick_defects(
            rng, n, int(round(config.crossed_fraction * n)), int(round(config.duplicate_fraction * n)))
        for i in log.crossed_rows:
            # lock or cross the quote; bid levels stay strictly decreasing
            bp[i, 0] = ap[i, 0] + TICK * int(rng.integers(0, 2))
        for i in log.duplicate_rows:
            time_ns[i] = time_ns[i - 1]

    day = DaySeries(
        config.stock, config.date, time_ns, ap, av, bp, bv,
        event_type=msg[:, 0].astype(np.int8), order_id=msg[:, 1], size=msg[:, 2],
        price=msg[:, 3], direction=msg[:, 4].astype(np.int8),
    )
    return SyntheticDay(day, log)


def trading_days(start: dt.date, n: int) -> List[dt.date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def generate_days(config: GeneratorConfig, n_days: int) -> List[SyntheticDay]:
    """Consecutive weekdays from ``config.date``; each day gets its own derived seed.

    The opening mid of a day is the closing mid of the previous one.
    """
    out = []
    cfg = config
    for i, date in enumerate(trading_days(config.date, n_days)):
        seed = int(np.random.SeedSequence([config.seed, i]).generate_state(1)[0])
        syn = generate_day(replace(cfg, seed=seed, date=date))
        out.append(syn)
        close = syn.day.mid_x2()[-1] / (2 * PRICE_SCALE) if len(syn.day) else cfg.initial_mid
        cfg = replace(cfg, initial_mid=float(close))
    return out


def write_synthetic_day(syn: SyntheticDay, out_dir) -> tuple:
    os.makedirs(out_dir, exist_ok=True)
    msg_name, ob_name = lobster_names(syn.day.stock, syn.day.date, syn.day.levels)
    paths = (os.path.join(out_dir, msg_name), os.path.join(out_dir, ob_name))
    write_day(syn.day, *paths)
    return paths
