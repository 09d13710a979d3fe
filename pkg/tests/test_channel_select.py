import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assimkit.channel_select import (
    ChannelJacobian,
    band_counts,
    bin_index,
    gap_fill,
    interval_sample,
    min_gap,
    read_jacobians,
    synthetic_fixture,
    write_channel_list,
    write_jacobians,
)

P = np.arange(1.0, 1101.0)


def chan(cid, peak, band="co2", amp=1.0):
    j = amp * np.exp(-0.5 * ((P - peak) / 15.0) ** 2)
    return ChannelJacobian(cid, band, P, j)


def occupied_bins(peaks, inc=20.0, floor=20.0):
    """Count distinct [floor + k inc, floor + (k+1) inc) bins by direct enumeration."""
    bins = set()
    for p in peaks:
        k = 0
        while not (floor + k * inc <= p < floor + (k + 1) * inc):
            k += 1
        bins.add(k)
    return len(bins)


def test_peak_is_argmax_abs():
    j = np.zeros(P.size)
    j[99], j[499] = 0.5, -0.9
    c = ChannelJacobian(1, "h2o", P, j)
    assert c.peak_pressure == 500.0 and c.peak_value == 0.9
    with pytest.raises(ValueError):
        ChannelJacobian(2, "ozone", P, j)


def test_single_channel_retained():
    c = chan(1, 300)
    assert interval_sample([c]) == [c]


def test_ten_hpa_spacing_bin_count():
    peaks = np.arange(200.0, 401.0, 10.0)
    chans = [chan(k, p) for k, p in enumerate(peaks)]
    kept = interval_sample(chans)
    # 200..400 at 10 hPa touches bins [200,220) .. [400,420): eleven of them
    assert len(peaks) == 21
    assert len(kept) == occupied_bins(peaks) == 11


def test_bin_representative_rule():
    a, b, c = chan(5, 305, amp=0.5), chan(3, 310, amp=0.9), chan(4, 315, amp=0.9)
    assert [x.channel_id for x in interval_sample([a, b, c])] == [3]


def test_below_floor_kept():
    chans = [chan(1, 5), chan(2, 10), chan(3, 30)]
    assert len(interval_sample(chans)) == 3
    assert bin_index([19.9, 20.0, 39.9, 40.0]).tolist() == [-1, 0, 0, 1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(20, 1000), min_size=1, max_size=40))
def test_interval_sample_properties(peaks):
    chans = [chan(k, p, band="co2" if k % 2 else "h2o") for k, p in enumerate(peaks)]
    kept = interval_sample(chans)
    assert {c.channel_id for c in kept} <= {c.channel_id for c in chans}
    for band in ("co2", "h2o"):
        bp = [c.peak_pressure for c in chans if c.band == band]
        kb = [c for c in kept if c.band == band]
        assert len(kb) == (occupied_bins(bp) if bp else 0)
        assert len(set(bin_index([c.peak_pressure for c in kb]).tolist())) == len(kb)


def test_fixture_count_anchors():
    sounding, window = synthetic_fixture()
    counts = band_counts(sounding)
    assert len(sounding) == 108 and counts == {"co2": 85, "h2o": 23}
    kept = interval_sample(sounding)
    assert band_counts(kept) == {"co2": 16, "h2o": 9}
    for band in ("co2", "h2o"):
        assert band_counts(kept)[band] == occupied_bins([c.peak_pressure for c in sounding if c.band == band])
    ids = {c.channel_id for c in kept}
    cands = [c for c in sounding if c.channel_id not in ids] + window
    res = gap_fill(kept, cands, {"co2": 21, "h2o": 16, "window": 1})
    assert not res.partial
    assert band_counts(res.added) == {"co2": 5, "h2o": 7, "window": 1}
    assert len(res.channels) == 38


def test_gap_fill_trivial_cases():
    kept = [chan(1, 100), chan(2, 300)]
    res = gap_fill(kept, [chan(3, 200)], {"co2": 2})
    assert res.added == [] and [c.channel_id for c in res.channels] == [1, 2]
    res = gap_fill(kept, [chan(3, 200)], {"co2": 3})
    assert [c.channel_id for c in res.added] == [3]
    res = gap_fill(kept, [chan(3, 200)], {"co2": 5})
    assert res.partial and res.shortfall == {"co2": 2}
    with pytest.raises(ValueError):
        gap_fill(kept, [chan(1, 100)], {"co2": 3})


def test_gap_fill_picks_widest_gap():
    kept = [chan(1, 100), chan(2, 500)]
    cands = [chan(3, 150), chan(4, 300), chan(5, 480), chan(6, 900)]
    res = gap_fill(kept, cands, {"co2": 3})
    assert [c.channel_id for c in res.added] == [6]
    res = gap_fill(kept, cands, {"co2": 4})
    assert [c.channel_id for c in res.added] == [6, 4]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 1100), min_size=3, max_size=25, unique=True), st.integers(1, 10))
def test_gap_fill_max_min_greedy(peaks, extra):
    kept = [chan(0, peaks[0])]
    cands = [chan(k, p) for k, p in enumerate(peaks[1:], start=1)]
    res = gap_fill(kept, cands, {"co2": 1 + extra})
    have = [peaks[0]]
    for pick in res.added:
        best = max(min(abs(c.peak_pressure - h) for h in have) for c in cands if c not in res.added[: res.added.index(pick)])
        assert min(abs(pick.peak_pressure - h) for h in have) == best
        have.append(pick.peak_pressure)
    assert len(res.added) == min(extra, len(cands))


def test_min_gap():
    assert min_gap([300, 100, 250]) == 50
    assert min_gap([5]) == float("inf")


def test_io_round_trip(tmp_path):
    sounding, window = synthetic_fixture(seed=3)
    write_jacobians(tmp_path / "j.csv", sounding[:5] + window)
    back = read_jacobians(tmp_path / "j.csv")
    for a, b in zip(back, sounding[:5] + window):
        assert (a.channel_id, a.band, a.peak_pressure) == (b.channel_id, b.band, b.peak_pressure)
        np.testing.assert_array_equal(a.jacobian, b.jacobian)
    write_channel_list(tmp_path / "l.csv", back)
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "channel_id,band,peak_pressure"
