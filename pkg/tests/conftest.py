import datetime as dt

import numpy as np
import pytest

from lobkit import synthgen
from lobkit.lobster_io import DaySeries, NS_PER_SECOND, SESSION_START_NS, clean_day

TICK = 100          # $0.01 in file price units


def dense_day(ask1, bid1, times=None, levels=10, gap=TICK, volume=100,
              stock="TST", date=dt.date(2019, 6, 3)):
    """Day with fully populated books: levels spaced ``gap`` apart behind the given best quotes."""
    ask1 = np.asarray(ask1, dtype=np.int64)
    bid1 = np.asarray(bid1, dtype=np.int64)
    n = len(ask1)
    if times is None:
        times = SESSION_START_NS + NS_PER_SECOND * np.arange(1, n + 1)
    steps = gap * np.arange(levels)
    vol = np.full((n, levels), volume, dtype=np.int64)
    return DaySeries(
        stock, date, np.asarray(times, dtype=np.int64),
        ask1[:, None] + steps, vol, bid1[:, None] - steps, vol.copy(),
        event_type=np.ones(n, dtype=np.int8), order_id=np.arange(1, n + 1),
        size=np.full(n, 100), price=ask1.copy(), direction=np.ones(n, dtype=np.int8),
    )


def mid_day(mids_x2, spread=TICK, **kw):
    """Day whose mid-price path (twice the mid, file units) is given."""
    m = np.asarray(mids_x2, dtype=np.int64)
    return dense_day((m + spread) // 2, (m - spread) // 2, **kw)


@pytest.fixture(scope="session")
def large_corpus():
    """Twenty raw large-tick synthetic days with logged crossed and duplicate rows."""
    cfg = synthgen.GeneratorConfig(seed=7, regime=synthgen.Regime.LARGE, rate=0.15,
                                   crossed_fraction=0.01, duplicate_fraction=0.01, stock="LRG")
    return synthgen.generate_days(cfg, 20)


@pytest.fixture(scope="session")
def large_clean(large_corpus):
    return [clean_day(s.day) for s in large_corpus]


# criterion number -> (title, passed); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}")
