import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from assimkit.forward import G0
from assimkit.grid import GridSpec, RegistryMismatchError, StateField, latitude_weights, make_channel_registry
from assimkit.metrics import (
    InsufficientDataError,
    NoDataError,
    ScoreSeries,
    TCTrack,
    acc,
    activity,
    departure_scores,
    effective_lead_time,
    forecast_activity,
    gnss_departures,
    great_circle_km,
    model_refractivity_column,
    normalized_diff,
    paired_t_test,
    read_tracks,
    score_gnss,
    score_insitu,
    track_error,
    write_scorecard,
    wrmse,
)
from assimkit.records import PointObs, ProfileObs
from assimkit.synthetic import climatology

T0 = datetime(2022, 1, 1)


def _alpha(spec):
    c = np.cos(np.deg2rad(spec.lats))
    return c / c.mean()


def oracle_wrmse(x, y, a):
    C, H, W = x.shape
    out = []
    for c in range(C):
        s = 0.0
        for i in range(H):
            for j in range(W):
                s += a[i] * (x[c, i, j] - y[c, i, j]) ** 2
        out.append(math.sqrt(s / (H * W)))
    return np.array(out)


def oracle_acc(x, y, m, a):
    C, H, W = x.shape
    out = []
    for c in range(C):
        num = sx = sy = 0.0
        for i in range(H):
            for j in range(W):
                fa, ta = x[c, i, j] - m[c, i, j], y[c, i, j] - m[c, i, j]
                num += a[i] * fa * ta
                sx += a[i] * fa * fa
                sy += a[i] * ta * ta
        out.append(num / math.sqrt(sx * sy))
    return np.array(out)


def test_wrmse_and_acc_oracles():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec = GridSpec.from_shape(6, 12)
        w, a = latitude_weights(spec), _alpha(spec)
        x, y, m = rng.normal(size=(3, 2, *spec.shape))
        assert np.max(np.abs(wrmse(x, y, w) - oracle_wrmse(x, y, a))) <= 1e-12
        assert np.max(np.abs(acc(x, y, m, w) - oracle_acc(x, y, m, a))) <= 1e-12


def test_wrmse_trivial(small_grid):
    w = latitude_weights(small_grid)
    x = np.random.default_rng(1).normal(size=(2, *small_grid.shape))
    assert np.all(wrmse(x, x, w) == 0)
    np.testing.assert_allclose(wrmse(x + 3.0, x, w), 3.0, rtol=1e-12)
    with pytest.raises(RegistryMismatchError):
        wrmse(x, x[:1], w)


def test_acc_bounds_and_identities():
    rng = np.random.default_rng(2)
    spec = GridSpec.from_shape(4, 8)
    w = latitude_weights(spec)
    lo, hi = np.inf, -np.inf
    for _ in range(10_000):
        x, y, m = rng.normal(size=(3, 1, *spec.shape)) * rng.uniform(0.01, 100)
        r = acc(x, y, m, w)[0]
        lo, hi = min(lo, r), max(hi, r)
    assert -1.0 <= lo and hi <= 1.0
    x, m = rng.normal(size=(2, 2, *spec.shape))
    np.testing.assert_allclose(acc(x, x, m, w), 1.0, atol=1e-15)
    np.testing.assert_allclose(acc(2 * m - x, x, m, w), -1.0, atol=1e-15)
    assert np.all(np.isnan(acc(m, x, m, w)))
    y = rng.normal(size=x.shape)
    np.testing.assert_allclose(acc(x + 5, y + 5, m + 5, w), acc(x, y, m, w), atol=1e-12)


def _field(spec, reg, rng):
    return StateField(spec, reg, rng.normal(size=(len(reg), *spec.shape)), T0, "analysis")


def test_insitu_scores():
    rng = np.random.default_rng(3)
    spec, reg = GridSpec.from_shape(8, 16), make_channel_registry(False)
    f = _field(spec, reg, rng)
    obs = []
    for _ in range(40):
        i, j = rng.integers(0, 8), rng.integers(0, 16)
        obs.append(PointObs(float(spec.lats[i]), float(spec.lons[j]), T0, "T2m", float(f.data[reg.index("T2m"), i, j])))
    s = score_insitu(f, obs, "all")
    assert s["rmse"] == s["mbe"] == s["std"] == 0.0
    shifted = [PointObs(o.lat, o.lon, o.time, o.variable, o.value - 2.0) for o in obs]
    s = score_insitu(f, shifted, "all")
    assert s["rmse"] == pytest.approx(2.0) and s["mbe"] == pytest.approx(2.0) and s["std"] == pytest.approx(0.0, abs=1e-12)
    noisy = [PointObs(o.lat, o.lon, o.time, o.variable, o.value + rng.normal(1, 3)) for o in obs]
    s = score_insitu(f, noisy, "all")
    assert abs(s["rmse"] ** 2 - (s["std"] ** 2 + s["mbe"] ** 2)) <= 1e-10 * s["rmse"] ** 2
    with pytest.raises(NoDataError):
        score_insitu(f, [], "rmse")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=50))
def test_rmse_identity(d):
    s = departure_scores(d)
    assert abs(s["rmse"] ** 2 - (s["std"] ** 2 + s["mbe"] ** 2)) <= 1e-10 * max(s["rmse"] ** 2, 1e-300) + 1e-300


def _gnss_setup():
    spec, reg = GridSpec.from_shape(8, 16), make_channel_registry(False)
    clim = climatology(spec, reg, T0)
    i, j = 2, 3
    n_mod, phi = model_refractivity_column(clim, i, j)
    return clim, float(spec.lats[i]), float(spec.lons[j]), n_mod, phi


def test_gnss_matching_threshold_exact():
    clim, lat, lon, n_mod, phi = _gnss_setup()
    heights = phi / G0
    prof = ProfileObs(lat, lon, T0, heights, n_mod.copy())
    assert score_gnss(clim, [prof], "rmse") == 0.0
    r = 0.03
    prof = ProfileObs(lat, lon, T0, heights, n_mod * (1 - r))
    s = score_gnss(clim, [prof], "all")
    assert s["rmse"] == pytest.approx(r) and s["std"] == pytest.approx(0, abs=1e-12)
    # one observed layer per model level, offset by a chosen geopotential difference
    for dphi, expect in ((1500.0, 0), (1000.0, 0), (999.0, 13), (0.0, 13)):
        prof = ProfileObs(lat, lon, T0, (phi + dphi) / G0, n_mod.copy())
        assert gnss_departures(clim, [prof]).size == expect
    with pytest.raises(NoDataError):
        score_gnss(clim, [ProfileObs(lat, lon, T0, (phi + 1500.0) / G0, n_mod.copy())])


def test_gnss_single_level_excluded():
    clim, lat, lon, n_mod, phi = _gnss_setup()
    z = phi.copy()
    z[4] += 1500.0
    # keep the shifted level from being nearest to its neighbours' model levels
    prof = ProfileObs(lat, lon, T0, np.sort(z) / G0, n_mod[np.argsort(z)])
    d = gnss_departures(clim, [prof])
    assert d.size == 12


def test_normalized_diff():
    assert normalized_diff(3.0, 3.0) == 0.0
    assert normalized_diff(4.0, 2.0) == 1.0
    assert normalized_diff(133.31, 167.24) == (133.31 - 167.24) / 167.24
    assert round(normalized_diff(133.31, 167.24), 4) == -0.2029
    assert math.isnan(normalized_diff(1.0, 0.0))


def _series(v, start=T0):
    return ScoreSeries(tuple(start + timedelta(days=k) for k in range(len(v))), np.asarray(v, float))


def test_t_test_trivial_cases():
    a = _series([1.0, 2.0, 3.0])
    r = paired_t_test(a, a)
    assert r.t == 0 and r.ci_low == r.ci_high == 0.0 and not r.significant
    r = paired_t_test(_series([1.1, 2.2, 3.3]), a)
    assert r.ci_low > 0 and r.significant
    with pytest.raises(InsufficientDataError):
        paired_t_test(_series([1.0]), _series([1.0]))
    with pytest.raises(ValueError):
        paired_t_test(a, _series([1.0, 2.0, 3.0], T0 + timedelta(days=1)))


def test_t_test_matches_scipy():
    rng = np.random.default_rng(4)
    b = rng.uniform(1, 2, 50)
    a = b * (1 + rng.normal(0.01, 0.05, 50))
    r = paired_t_test(_series(a), _series(b))
    ref = stats.ttest_1samp((a - b) / b, 0.0)
    assert r.t == pytest.approx(ref.statistic, rel=1e-12)
    ci = ref.confidence_interval(0.95)
    assert (r.ci_low, r.ci_high) == pytest.approx((ci.low, ci.high), rel=1e-10)


def test_t_test_power_monte_carlo():
    n, mu, sigma, seeds = 730, 0.05, 0.1, 1000
    hits = 0
    for s in range(seeds):
        rng = np.random.default_rng(s)
        d = rng.normal(mu, sigma, n)
        hits += paired_t_test(_series(1.0 + d), _series(np.ones(n))).significant
    q = stats.t.ppf(0.975, n - 1)
    delta = mu / sigma * math.sqrt(n)
    power = stats.nct.sf(q, n - 1, delta) + stats.nct.cdf(-q, n - 1, delta)
    assert abs(hits / seeds - power) <= 0.03


def test_t_test_lag1_deflates():
    d = np.repeat(np.random.default_rng(5).normal(0.02, 0.05, 40), 3)
    r0 = paired_t_test(_series(1 + d), _series(np.ones(d.size)))
    r1 = paired_t_test(_series(1 + d), _series(np.ones(d.size)), lag1_correction=True)
    assert r1.n_eff < r0.n_eff and (r1.ci_high - r1.ci_low) > (r0.ci_high - r0.ci_low)


def test_activity():
    rng = np.random.default_rng(6)
    spec = GridSpec.from_shape(8, 16)
    w = latitude_weights(spec)
    f, m = rng.normal(size=(2, 3, *spec.shape))
    ref = activity(f, m, w)
    np.testing.assert_allclose(forecast_activity(f, m, ref, w), 1.0)
    np.testing.assert_array_equal(forecast_activity(m, m, ref, w), 0.0)
    np.testing.assert_allclose(forecast_activity(m + 0.9 * (f - m), m, ref, w), 0.9, rtol=1e-12)
    with pytest.raises(ValueError):
        forecast_activity(f, m, 0.0, w)


def test_effective_lead_time():
    days = np.arange(0.5, 10.01, 0.5)
    assert effective_lead_time(days, np.ones(days.size)) == 10.0
    assert effective_lead_time(days, np.full(days.size, 0.5)) == 0.0
    step = np.where(days <= 9.5, 0.7, 0.5)
    assert effective_lead_time(days, step) == 9.5
    assert effective_lead_time(days, step, interpolate=True) == pytest.approx(9.5 + 0.5 * 0.5)
    assert effective_lead_time([1, 2], [0.6, 0.1]) == 1.0


def _track(sid, lats, lons):
    return TCTrack(sid, tuple(T0 + timedelta(hours=24 * k) for k in range(len(lats))), tuple(lats), tuple(lons))


def test_great_circle_and_tracks(tmp_path):
    assert great_circle_km(0, 0, 0, 1) == pytest.approx(111.19, abs=5e-3)
    assert great_circle_km(0, 0, 0, 180) == pytest.approx(math.pi * 6371.0)
    best = _track("A", [10, 11, 12, 13], [130, 131, 132, 133])
    fc = _track("A", [10, 11, 12, 13], [130, 131, 132, 134])
    assert track_error(best, best, 48) == 0.0
    assert track_error(fc, best, 72) == track_error(best, fc, 72)
    assert track_error(fc, best, 72) == pytest.approx(great_circle_km(13, 134, 13, 133))
    with pytest.raises(NoDataError):
        track_error(fc, best, 96)
    with pytest.raises(ValueError):
        TCTrack("x", (T0, T0), (0, 0), (0, 0))
    p = tmp_path / "t.csv"
    p.write_text("storm_id,time,lat,lon\nA,2022-01-02T00:00:00,11,131\nA,2022-01-01T00:00:00,10,130\n")
    t = read_tracks(p)["A"]
    assert t.times[0] == T0 and t.lats == (10.0, 11.0)


def test_scorecard_formatting(tmp_path):
    p = tmp_path / "s.csv"
    write_scorecard(p, [{"variable": "T", "level": 500, "lead": 6, "score": "wrmse", "value": 1 / 3, "n": 4}, {"variable": "Z", "score": "acc", "value": float("nan")}])
    lines = p.read_text().splitlines()
    assert lines[0] == "variable,level,lead,score,value,n,t,ci_low,ci_high"
    assert lines[1] == "T,500,6,wrmse,0.3333333333,4,,,"
    assert lines[2] == "Z,,,acc,nan,,,,"
