import math
import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import TICK, dense_day, mid_day
from lobkit import microstructure as ms
from lobkit.errors import EmptyInput, HorizonTooLong, InsufficientLevels, ZeroPriceChanges
from lobkit.lobster_io import NS_PER_SECOND as S, LobSnapshot, SESSION_START_NS
from lobkit.microstructure import TickClass

# yearly mean spreads in dollars, 2017-2019, with the published size class
PUBLISHED_SPREADS = {
    "CHTR": ([0.2869, 0.3475, 0.2206], "small"),
    "GOOG": ([0.4362, 0.7898, 0.5511], "small"),
    "GS": ([0.0965, 0.1111, 0.0759], "small"),
    "IBM": ([0.0362, 0.0444, 0.0316], "small"),
    "MCD": ([0.0321, 0.0542, 0.0531], "small"),
    "NVDA": ([0.0437, 0.0844, 0.0500], "small"),
    "AAPL": ([0.0145, 0.0223, 0.0190], "medium"),
    "ABBV": ([0.0211, 0.0422, 0.0212], "medium"),
    "PM": ([0.0231, 0.0293, 0.0240], "medium"),
    "BAC": ([0.0109, 0.0109, 0.0105], "large"),
    "CSCO": ([0.0106, 0.0110, 0.0107], "large"),
    "KO": ([0.0112, 0.0116, 0.0111], "large"),
    "ORCL": ([0.0115, 0.0117, 0.0111], "large"),
    "PFE": ([0.0111, 0.0114, 0.0109], "large"),
    "VZ": ([0.0119, 0.0121, 0.0112], "large"),
}


# --- tick size class --------------------------------------------------------------

@pytest.mark.parametrize("stock", ["GOOG", "BAC", "AAPL"])
def test_classification_examples(stock):
    spreads, cls = PUBLISHED_SPREADS[stock]
    assert ms.classify_tick_size(spreads, 0.01) is TickClass(cls)


def test_boundaries_are_inclusive():
    assert ms.yearly_tick_class(0.03, 0.01) is TickClass.SMALL
    assert ms.yearly_tick_class(0.015, 0.01) is TickClass.LARGE
    assert ms.yearly_tick_class(0.0151, 0.01) is TickClass.MEDIUM
    assert ms.yearly_tick_class(0.0299, 0.01) is TickClass.MEDIUM


def test_no_majority_resolves_to_medium():
    with pytest.warns(ms.NoMajorityWarning):
        assert ms.classify_tick_size([0.01, 0.05], 0.01) is TickClass.MEDIUM
    with pytest.warns(ms.NoMajorityWarning):
        assert ms.classify_tick_size([0.01, 0.02, 0.05], 0.01) is TickClass.MEDIUM


def test_two_of_three_is_a_majority():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert ms.classify_tick_size([0.05, 0.04, 0.011]) is TickClass.SMALL


@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=5), st.floats(0.01, 100.0))
def test_classification_is_scale_free(spreads, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ms.NoMajorityWarning)
        base = ms.classify_tick_size(spreads, 0.01)
        scaled = ms.classify_tick_size([s * k for s in spreads], 0.01 * k)
    # exactly-on-boundary ratios can flip under float scaling; those are tolerance-guarded
    assert base is scaled


# --- spread distribution ----------------------------------------------------------

def test_spread_pdf_counts():
    day = dense_day([1000100, 1000100, 1000200], [1000000, 1000000, 1000000])
    assert ms.spread_pdf_ticks([day]) == pytest.approx({1: 2 / 3, 2: 1 / 3})
    flat = dense_day([1000100] * 4, [1000000] * 4)
    assert ms.spread_pdf_ticks([flat]) == {1: 1.0}


def test_large_tick_synthetic_spread_mode(large_clean):
    pdf = ms.spread_pdf_ticks(large_clean)
    direct = Counter()
    for d in large_clean:
        direct.update(((d.ask_price[:, 0] - d.bid_price[:, 0]) // TICK).tolist())
    assert ms.histogram_mode(pdf) == max(direct, key=direct.get)
    assert ms.histogram_mode(pdf) in (1, 2)
    assert sum(pdf.values()) == pytest.approx(1.0, abs=1e-9)


# --- best volume CCDF --------------------------------------------------------------

def test_ccdf_definition():
    ccdf = ms.EmpiricalCCDF.from_counts(Counter([1, 2, 3]))
    assert ccdf(2) == pytest.approx(2 / 3)
    assert ccdf(1) == 1.0
    assert ccdf(4) == 0.0


def test_single_volume_step():
    ccdf = ms.EmpiricalCCDF.from_counts({50: 7})
    assert [ccdf(v) for v in (1, 50, 51)] == [1.0, 1.0, 0.0]


def test_ccdf_matches_geometric_tail():
    p = 0.2
    sample = np.random.default_rng(3).geometric(p, size=100_000)
    vals, cnt = np.unique(sample, return_counts=True)
    ccdf = ms.EmpiricalCCDF.from_counts(dict(zip(vals.tolist(), cnt.tolist())))
    for v in range(1, 16):
        assert ccdf(v) == pytest.approx((1 - p) ** (v - 1), abs=0.01)


def test_signed_table_puts_asks_on_negative_axis(large_clean):
    table = ms.best_volume_ccdf(large_clean[:3]).signed_table()
    xs = [v for v, _ in table]
    assert xs == sorted(xs)
    asks = [(v, p) for v, p in table if v < 0]
    bids = [(v, p) for v, p in table if v > 0]
    # each side's tail is 1 at its smallest volume and non-increasing away from zero
    assert asks[-1][1] == 1.0 and bids[0][1] == 1.0
    assert all(a[1] <= b[1] for a, b in zip(asks, asks[1:]))
    assert all(a[1] >= b[1] for a, b in zip(bids, bids[1:]))


# --- actual depth --------------------------------------------------------------------

def _ask_book(prices):
    bids = [(1000000 - TICK * i, 1) for i in range(10)]
    return LobSnapshot.from_prices(0, [(p, 1) for p in prices], bids)


def test_dense_book_depth():
    s = _ask_book([1000100 + TICK * i for i in range(10)])
    assert ms.actual_depth(s) == (9, 9)


def test_sparse_book_depth():
    prices = [1000100 + TICK * i for i in range(9)] + [1002400]
    assert ms.actual_depth(_ask_book(prices))[0] == 23


def test_depth_needs_ten_levels():
    s = LobSnapshot.from_prices(0, [(1000100 + TICK * i, 1) for i in range(9)] + [None],
                                [(1000000 - TICK * i, 1) for i in range(10)])
    with pytest.raises(InsufficientLevels):
        ms.actual_depth(s)


def test_depth_counts_agree_with_snapshot_loop(large_clean):
    day = large_clean[0]
    ask, bid = Counter(), Counter()
    for s in day.snapshots():
        try:
            a, b = ms.actual_depth(s)
        except InsufficientLevels:
            continue
        ask[a] += 1
        bid[b] += 1
    got_a, got_b = ms.depth_counts(day)
    assert got_a == ask and got_b == bid


# --- information richness ------------------------------------------------------------

def test_information_richness_values():
    assert ms.information_richness(9.58e7, 5.91e5) == pytest.approx(5.09, abs=0.01)
    assert ms.information_richness(1.25e7, 2.89e6) == pytest.approx(1.46, abs=0.01)
    assert ms.information_richness(10, 10) == 0.0
    with pytest.raises(ZeroPriceChanges):
        ms.information_richness(10, 0)


@given(st.floats(1, 1e12), st.floats(1, 1e12))
def test_information_richness_antisymmetric(a, b):
    assert ms.information_richness(a, b) == pytest.approx(-ms.information_richness(b, a), abs=1e-12)


def test_price_change_counting():
    assert ms.count_price_changes([mid_day([2, 2, 4, 4, 6])]) == 2
    assert ms.count_price_changes([mid_day([2000000] * 6)]) == 0


def test_price_change_count_random_walk():
    rng = np.random.default_rng(11)
    m = 2_000_000 + 2 * TICK * np.cumsum(rng.integers(-1, 2, size=500))
    brute = sum(1 for i in range(1, len(m)) if m[i] != m[i - 1])
    assert ms.count_price_changes([mid_day(m)]) == brute


# --- horizon physical time ------------------------------------------------------------

def test_horizon_one_update_per_second():
    day = dense_day([1000100] * 50, [1000000] * 50, times=SESSION_START_NS + S * np.arange(50))
    assert ms.horizon_time_probabilities([day], [10])[10] == (0.0, 0.0, 1.0)


def test_horizon_burst_within_a_second():
    times = SESSION_START_NS + np.arange(1000) * (S // 1000)
    day = dense_day([1000100] * 1000, [1000000] * 1000, times=times)
    assert ms.horizon_time_probabilities([day], [10])[10] == (1.0, 0.0, 0.0)


def test_horizon_too_long():
    with pytest.raises(HorizonTooLong):
        ms.horizon_time_counts(dense_day([1000100] * 5, [1000000] * 5), 5)


def test_horizon_matches_erlang_tail():
    rate = 4.0
    gaps = np.random.default_rng(5).exponential(1 / rate, size=30_000)
    times = SESSION_START_NS + np.round(np.cumsum(gaps) * S).astype(np.int64)
    day = dense_day(np.full(len(times), 1000100), np.full(len(times), 1000000), times=times)
    got = ms.horizon_time_probabilities([day], [10, 50])
    for h in (10, 50):
        assert got[h] == pytest.approx(oracles.erlang_buckets(h, rate), abs=0.02)


@given(st.lists(st.integers(0, 3 * S), min_size=12, max_size=80))
@settings(max_examples=100, deadline=None)
def test_long_bucket_grows_with_horizon(gaps):
    # the exact form: over the snapshots shared by both horizons, the longer horizon
    # never has fewer >= 10 s gaps
    times = SESSION_START_NS + np.cumsum(gaps)
    day = dense_day(np.full(len(times), 1000100), np.full(len(times), 1000000), times=times)
    hs = (1, 2, 5, 10)
    for h in hs:
        assert ms.horizon_time_counts(day, h).sum() == len(day) - h
    for h1, h2 in zip(hs, hs[1:]):
        shared = day.take(slice(0, len(day) - h2 + h1))
        assert ms.horizon_time_counts(day, h2)[2] >= ms.horizon_time_counts(shared, h1)[2]


# --- yearly report ------------------------------------------------------------------------

def test_year_stats_merge_is_order_free(large_clean):
    days = large_clean[:6]
    fwd = ms.YearStats()
    for d in days:
        fwd.add_day(d)
    parts = [ms.YearStats().add_day(d) for d in reversed(days)]
    merged = parts[0]
    for p in parts[1:]:
        merged = merged.merge(p)
    a, b = fwd.summary(), merged.summary()
    for key in ("mean_price", "mean_spread", "ir", "n_updates", "n_price_changes"):
        assert a[key] == pytest.approx(b[key], rel=1e-12)
    assert a["spread_pdf"] == pytest.approx(b["spread_pdf"])
    assert a["horizon_time_probs"] == b["horizon_time_probs"]


def test_report_json_invariants(large_clean):
    rep = ms.build_report("LRG", {2019: large_clean[:5]}).to_json()
    e = rep["years"]["2019"]
    for key in ("spread_pdf", "depth_pdf_ask", "depth_pdf_bid"):
        assert sum(e[key].values()) == pytest.approx(1.0, abs=1e-9)
    for triple in e["horizon_time_probs"].values():
        assert sum(triple) == pytest.approx(1.0, abs=1e-9)
    assert e["ir"] == pytest.approx(math.log(e["n_updates"] / e["n_price_changes"]))
    assert rep["tick_class"] == "large"


def test_empty_year():
    with pytest.raises(EmptyInput):
        ms.build_report("X", {})
