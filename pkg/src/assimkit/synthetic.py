"""A small synthetic world for end-to-end runs: zonal climatology plus drifting waves.

The truth at step k is the climatology plus the anomaly pattern rolled k*shift
cells east. Because the climatology is zonally uniform, the reference
advection forecaster with zero damping and the same shift reproduces it
exactly. Observations sample the truth valid at their cycle time; their
timestamps are spread over the category's window.
"""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .forward import G0, AtmosColumn, saturation_vapor_pressure, simulate_ro_profile
from .grid import ChannelRegistry, GridSpec, StateField
from .observations import nearest_cell
from .records import PointObs, SwathObs

ANOMALY_SCALE = {"Z": 400.0, "T": 2.0, "U": 4.0, "V": 4.0, "R": 5.0, "T2m": 2.0, "MSLP": 300.0, "U10m": 3.0, "V10m": 3.0, "TP": 0.0}
OBS_NOISE = {"Z": 20.0, "T": 0.3, "U": 0.5, "V": 0.5, "R": 2.0, "T2m": 0.3, "MSLP": 30.0, "U10m": 0.5, "V10m": 0.5}
SWATH_LEVELS = (850, 500, 250)


def _height_km(p):
    return 7.0 * np.log(1013.25 / np.asarray(p, dtype=np.float64))


def climatology(grid: GridSpec, registry: ChannelRegistry, valid_time: datetime) -> StateField:
    lat = np.deg2rad(grid.lats)[:, None]
    ones = np.ones((1, grid.n_lon))
    out = np.zeros((len(registry), *grid.shape))
    for k, ch in enumerate(registry):
        if ch.level is not None:
            h = float(_height_km(ch.level))
        if ch.name == "Z":
            f = G0 * 1000.0 * h + 500.0 * np.cos(2 * lat)
        elif ch.name == "T":
            f = max(288.0 - 6.5 * h, 216.65) - 25.0 * np.sin(lat) ** 2
        elif ch.name == "U":
            f = 15.0 * np.cos(lat) * h / 10.0
        elif ch.name == "R":
            f = np.clip(80.0 - 5.0 * h, 10.0, 90.0) + 0.0 * lat
        elif ch.name == "T2m":
            f = 288.0 - 30.0 * np.sin(lat) ** 2
        elif ch.name == "MSLP":
            f = 101325.0 + 0.0 * lat
        elif ch.name == "U10m":
            f = 5.0 * np.cos(lat)
        else:
            f = 0.0 * lat
        out[k] = f * ones
    return StateField(grid, registry, out, valid_time, "climatology")


def anomaly(grid: GridSpec, registry: ChannelRegistry, seed: int, n_waves: int = 3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lat = np.deg2rad(grid.lats)[:, None]
    lon = np.deg2rad(grid.lons)[None, :]
    out = np.zeros((len(registry), *grid.shape))
    for k, ch in enumerate(registry):
        amp = ANOMALY_SCALE.get(ch.name, 0.0)
        for _ in range(n_waves):
            m = rng.integers(1, 5)
            n = rng.integers(1, 4)
            a = rng.uniform(0.2, 0.5)
            ph = rng.uniform(0, 2 * np.pi)
            out[k] += amp * a * np.cos(m * lon + ph) * np.cos(lat) * np.cos(n * lat)
    return out


def truth_at(grid, registry, start: datetime, step: int, shift: int, seed: int, dt_hours: int = 6) -> StateField:
    clim = climatology(grid, registry, start)
    data = clim.data + np.roll(anomaly(grid, registry, seed), step * shift, axis=-1)
    return StateField(grid, registry, data, start + timedelta(hours=step * dt_hours), "analysis")


def damped_forecast(truth_init: StateField, lead: int, shift: int, damping: float, dt_hours: int = 6) -> StateField:
    """What a damped advection forecast from ``truth_init`` gives after ``lead`` steps."""
    x = truth_init.data.astype(np.float64)
    mean = x.mean(axis=(-2, -1), keepdims=True)
    f = (1.0 - damping) ** lead
    out = f * np.roll(x, lead * shift, axis=-1) + (1.0 - f) * mean
    return truth_init.replace(data=out, valid_time=truth_init.valid_time + timedelta(hours=lead * dt_hours), kind="forecast")


def _random_points(rng, n):
    lat = np.rad2deg(np.arcsin(rng.uniform(-1, 1, n)))
    lon = rng.uniform(0, 360, n)
    return lat, lon


def _times(rng, t0, window, n):
    a, b = window
    secs = rng.integers(int(a * 3600), int(b * 3600), n)
    return [t0 + timedelta(seconds=int(s)) for s in secs]


def _specific_humidity(rh, t, p):
    e = rh / 100.0 * saturation_vapor_pressure(t)
    return 0.622 * e / (p - 0.378 * e)


def simulate_observations(truth: StateField, rng, windows: dict, n_stations: int, n_sondes: int, n_ro: int, n_pixels: int, outlier_fraction: float):
    """Point, profile and swath records sampling ``truth``, with some gross outliers."""
    grid, reg, t0 = truth.grid, truth.registry, truth.valid_time
    x = truth.data.astype(np.float64)
    recs = []

    lat, lon = _random_points(rng, n_stations)
    rows, cols = nearest_cell(lat, lon, grid)
    times = _times(rng, t0, windows["land_station"], n_stations)
    for s in range(n_stations):
        source = "land_station" if s % 2 == 0 else "marine"
        for var in ("T2m", "MSLP", "U10m", "V10m"):
            v = x[reg.index(var), rows[s], cols[s]] + rng.normal(0, OBS_NOISE[var])
            if rng.random() < outlier_fraction:
                v += 15.0 * ANOMALY_SCALE[var]
            recs.append(PointObs(float(lat[s]), float(lon[s]), times[s], var, float(v), None, None, source, f"stn{s:04d}"))

    lat, lon = _random_points(rng, n_sondes)
    rows, cols = nearest_cell(lat, lon, grid)
    times = _times(rng, t0, windows["radiosonde"], n_sondes)
    levels = sorted({c.level for c in reg if c.level is not None})
    for s in range(n_sondes):
        for p in levels:
            cell = (rows[s], cols[s])
            t = x[reg.index("T", p)][cell] + rng.normal(0, OBS_NOISE["T"])
            rh = np.clip(x[reg.index("R", p)][cell] + rng.normal(0, OBS_NOISE["R"]), 1.0, 100.0)
            obs = {
                "T": t,
                "U": x[reg.index("U", p)][cell] + rng.normal(0, OBS_NOISE["U"]),
                "V": x[reg.index("V", p)][cell] + rng.normal(0, OBS_NOISE["V"]),
                "GH": (x[reg.index("Z", p)][cell] + rng.normal(0, OBS_NOISE["Z"])) / G0,
                "Q": _specific_humidity(rh, t, p),
            }
            for var, v in obs.items():
                recs.append(PointObs(float(lat[s]), float(lon[s]), times[s], var, float(v), int(p), None, "radiosonde", f"sonde{s:03d}"))

    lat, lon = _random_points(rng, n_ro)
    rows, cols = nearest_cell(lat, lon, grid)
    times = _times(rng, t0, windows["gnss_ro"], n_ro)
    p = np.array(levels, dtype=np.float64)
    for s in range(n_ro):
        i, j = rows[s], cols[s]
        col = AtmosColumn.from_relative_humidity(
            p,
            np.array([x[reg.index("T", lv), i, j] for lv in levels]),
            np.array([x[reg.index("R", lv), i, j] for lv in levels]),
            np.array([x[reg.index("Z", lv), i, j] for lv in levels]),
        )
        recs.append(simulate_ro_profile(col, float(lat[s]), float(lon[s]), times[s], platform=f"ro{s % 3}"))

    if n_pixels:
        lat, lon = _random_points(rng, n_pixels)
        rows, cols = nearest_cell(lat, lon, grid)
        times = _times(rng, t0, windows["satellite"], n_pixels)
        bt = np.stack([x[reg.index("T", lv)][rows, cols] for lv in SWATH_LEVELS], axis=1) + rng.normal(0, 0.3, (n_pixels, len(SWATH_LEVELS)))
        bad = rng.random(n_pixels) < outlier_fraction
        bt[bad, 0] = 400.0
        zen = rng.uniform(0, 60, n_pixels)
        half = n_pixels // 2
        for name, sl in (("SAT-A", slice(0, half)), ("SAT-B", slice(half, n_pixels))):
            recs.append(SwathObs(lat[sl], lon[sl], np.array(times[sl], dtype="datetime64[s]"), bt[sl], zen[sl], "MWS", name))
    return recs
