import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assimkit.qc import (
    InsufficientDataError,
    QcConfig,
    QcReport,
    biweight_stats,
    gross_check,
    screen_brightness_temperatures,
    zone_of,
    zoned_screen,
)


def test_gross_bounds_closed():
    keep = gross_check([49.999, 50.0, 200.0, 350.0, 350.001, np.nan])
    assert keep.tolist() == [False, True, True, True, False, False]


def test_biweight_resists_outliers():
    rng = np.random.default_rng(20220101)
    x = rng.normal(0, 1, 100_000)
    x[:10_000] = 50.0 + rng.normal(0, 1, 10_000)
    st_ = biweight_stats(x)
    assert abs(st_.center) <= 0.02
    assert abs(st_.center) < abs(np.mean(x))


def _biweight_oracle(x, c=7.5):
    """Straight loop version of the iterated bi-weight location and midvariance."""
    x = sorted(float(v) for v in x)
    n = len(x)
    med = x[n // 2] if n % 2 else 0.5 * (x[n // 2 - 1] + x[n // 2])
    dev = sorted(abs(v - med) for v in x)
    mad = dev[n // 2] if n % 2 else 0.5 * (dev[n // 2 - 1] + dev[n // 2])
    loc = med
    for _ in range(10):
        num = den = 0.0
        for v in x:
            u = (v - loc) / (c * mad)
            if abs(u) < 1:
                w = (1 - u * u) ** 2
                num += w * (v - loc)
                den += w
        step = num / den
        loc += step
        if abs(step) < 1e-10 * mad:
            break
    num = den = 0.0
    for v in x:
        u = (v - loc) / (c * mad)
        if abs(u) < 1:
            num += (v - loc) ** 2 * (1 - u * u) ** 4
            den += (1 - u * u) * (1 - 5 * u * u)
    return loc, (n * num) ** 0.5 / abs(den)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=60, unique=True))
def test_biweight_matches_loop(xs):
    s = biweight_stats(xs)
    loc, spread = _biweight_oracle(xs)
    assert s.center == pytest.approx(loc, rel=1e-9, abs=1e-9)
    assert s.spread == pytest.approx(spread, rel=1e-9, abs=1e-9)


def test_biweight_degenerate_and_small():
    s = biweight_stats([5.0, 5.0, 5.0, 9.0])
    assert (s.center, s.spread) == (5.0, 0.0)
    with pytest.raises(InsufficientDataError):
        biweight_stats([1.0, 2.0])


def test_zones_pool_hemispheres():
    assert zone_of([0, 29.99, 30, -45, 59.99, 60, -90]).tolist() == [0, 0, 1, 1, 1, 2, 2]


@pytest.mark.parametrize("is_bt,thr", [(True, 6.0), (False, 4.0)])
def test_zoned_thresholds_by_constructed_deviation(is_bt, thr):
    rng = np.random.default_rng(3)
    base = rng.normal(0, 1, 500)
    lats = np.full(502, 10.0)
    # probes placed from the stats they will see; the base is large enough that they barely move
    s = biweight_stats(np.concatenate([base, [0.0, 0.0]]))
    vals = np.concatenate([base, [s.center + (thr - 0.05) * s.spread, s.center + (thr + 0.05) * s.spread]])
    s = biweight_stats(vals)
    keep = zoned_screen(lats, vals, is_bt)
    assert abs(vals[-2] - s.center) <= thr * s.spread
    assert abs(vals[-1] - s.center) > thr * s.spread
    assert keep[-2] and not keep[-1]
    # the same deviation as a fraction between the two thresholds separates BT from other
    mid = s.center + 5.0 * s.spread
    vals_mid = np.concatenate([base, [mid, mid]])
    sm = biweight_stats(vals_mid)
    z = abs(mid - sm.center) / sm.spread
    assert 4.0 < z <= 6.0
    assert zoned_screen(lats, vals_mid, True)[-1]
    assert not zoned_screen(lats, vals_mid, False)[-1]


def test_zones_screen_independently():
    rng = np.random.default_rng(9)
    lats = np.concatenate([np.full(300, 10.0), np.full(300, -70.0)])
    vals = np.concatenate([rng.normal(0, 1, 300), rng.normal(100, 1, 300)])
    keep = zoned_screen(lats, vals, False)
    assert keep.mean() > 0.99


def test_insufficient_zone_kept_and_flagged():
    rep = QcReport()
    lats = [10.0, 10.0, 45.0, 45.0, 45.0, 45.0]
    keep = zoned_screen(lats, [1.0, 1e6, 0.0, 0.1, -0.1, 0.05], False, report=rep)
    assert keep[0] and keep[1]
    assert [r["zone"] for r in rep.flagged] == ["low"]


def test_bt_screen_runs_gross_then_statistics():
    rng = np.random.default_rng(4)
    bt = rng.normal(250, 2, (400, 3))
    bt[0, 0] = 400.0
    bt[1, 1] = 40.0
    bt[2, 2] = 250 + 30.0
    keep = screen_brightness_temperatures(rng.uniform(-20, 20, 400), bt)
    assert not keep[0, 0] and not keep[1, 1] and not keep[2, 2]
    assert keep.sum() >= 400 * 3 - 10


def test_config_validation():
    with pytest.raises(ValueError):
        QcConfig(z_threshold_bt=0)
    with pytest.raises(ValueError):
        QcConfig(zone_edges=(60.0, 30.0))
