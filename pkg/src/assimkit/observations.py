"""Project raw observations to the grid and encode them as mask-carrying tensors.

Two encodings exist. Dense, regularly reporting streams (satellite swaths,
surface stations, marine platforms) are binned into hourly frames and
stacked along a time axis. Sparse, moving platforms (GNSS-RO) are written
into a single frame and carry their observation time as two extra channels,
``sin(2 pi dt / W)`` and ``cos(2 pi dt / W)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from .forward import G0, RO_LAYERS, relative_humidity_from_q, resample_profile
from .grid import ChannelRegistry, GridSpec
from .records import PointObs, ProfileObs, SwathObs


class LayoutError(ValueError):
    pass


class WindowError(ValueError):
    pass


class StatsError(ValueError):
    pass


@dataclass(eq=False)
class Frame:
    """One sparse gridded frame: ``values``/``mask`` are [C, n_lat, n_lon]."""

    values: np.ndarray
    mask: np.ndarray
    channels: tuple[str, ...]
    rejected: list[str] = field(default_factory=list)
    collisions: int = 0

    @property
    def observed(self) -> np.ndarray:
        """Cells where at least one channel carries data."""
        return self.mask.any(axis=0)


@dataclass(eq=False)
class GriddedObsTensor:
    values: np.ndarray  # [T, C, n_lat, n_lon]
    mask: np.ndarray
    confidence: np.ndarray
    window_start: datetime
    window_hours: int
    channels: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape


def empty_frame(spec: GridSpec, channels: Sequence[str]) -> Frame:
    shape = (len(channels), *spec.shape)
    return Frame(np.zeros(shape), np.zeros(shape), tuple(channels))


def _haversine_deg(lat1, lon1, lat2, lon2):
    p1, p2 = np.deg2rad(lat1), np.deg2rad(lat2)
    dlat = p2 - p1
    dlon = np.deg2rad(lon2 - lon1)
    a = np.sin(dlat / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlon / 2) ** 2
    return 2.0 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def nearest_cell(lats, lons, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Great-circle nearest cell centre; exact ties go to the lower flat index."""
    lats = np.atleast_1d(np.asarray(lats, dtype=np.float64))
    lons = np.mod(np.atleast_1d(np.asarray(lons, dtype=np.float64)), 360.0)
    if np.any(np.abs(lats) > 90.0):
        raise ValueError("latitude outside [-90, 90]")
    res = spec.resolution
    i0 = np.floor((90.0 - lats) / res - 0.5).astype(np.int64)
    j0 = np.floor(lons / res - 0.5).astype(np.int64)
    best_d = np.full(lats.shape, np.inf)
    best_flat = np.full(lats.shape, np.iinfo(np.int64).max)
    best_i = np.zeros(lats.shape, np.int64)
    best_j = np.zeros(lats.shape, np.int64)
    for di in (0, 1):
        i = np.clip(i0 + di, 0, spec.n_lat - 1)
        for dj in (0, 1):
            j = np.mod(j0 + dj, spec.n_lon)
            d = _haversine_deg(lats, lons, spec.lat_of_row(i), spec.lon_of_col(j))
            flat = i * spec.n_lon + j
            better = (d < best_d) | ((d == best_d) & (flat < best_flat))
            best_d = np.where(better, d, best_d)
            best_flat = np.where(better, flat, best_flat)
            best_i = np.where(better, i, best_i)
            best_j = np.where(better, j, best_j)
    return best_i, best_j


def project_nearest(lats, lons, values, spec: GridSpec, channels: Sequence[str] | None = None, times=None, frame_start: datetime | None = None) -> Frame:
    """Place each observation in its nearest grid cell.

    ``values`` is [N, C] (or [N] for one channel) with NaN for a channel an
    observation does not carry. When several observations land in one cell
    the first in input order wins; later ones are counted in ``collisions``.
    Records with |lat| > 90 or, when ``times`` is given, outside the hour
    starting at ``frame_start`` are skipped and listed in ``rejected``.
    """
    lats = np.asarray(lats, dtype=np.float64).ravel()
    lons = np.asarray(lons, dtype=np.float64).ravel()
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        vals = np.zeros((0, len(channels) if channels else 1))
    elif vals.ndim == 1:
        vals = vals[:, None]
    n, c = vals.shape
    channels = tuple(channels) if channels is not None else tuple(f"c{k}" for k in range(c))
    if len(channels) != c:
        raise LayoutError(f"{c} value columns but {len(channels)} channel names")
    frame = empty_frame(spec, channels)
    if n == 0:
        return frame
    ok = np.abs(lats) <= 90.0
    if times is not None:
        t = np.asarray(times, dtype="datetime64[s]")
        t0 = np.datetime64(frame_start, "s")
        ok &= (t >= t0) & (t < t0 + np.timedelta64(3600, "s"))
    for k in np.flatnonzero(~ok):
        frame.rejected.append(f"record {k}: lat={lats[k]:.3f} outside [-90, 90] or time outside frame")
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return frame
    rows, cols = nearest_cell(lats[idx], lons[idx], spec)
    flat = rows * spec.n_lon + cols
    _, first = np.unique(flat, return_index=True)
    frame.collisions = int(idx.size - first.size)
    keep = idx[first]
    r, cc = rows[first], cols[first]
    v = vals[keep]
    present = np.isfinite(v)
    for ch in range(c):
        sel = present[:, ch]
        frame.values[ch, r[sel], cc[sel]] = v[sel, ch]
        frame.mask[ch, r[sel], cc[sel]] = 1.0
    return frame


def project_points(records: Sequence[PointObs], keys: Sequence[tuple[str, int | None]], spec: GridSpec, frame_start: datetime | None = None) -> Frame:
    """Grid point records whose (variable, level) appears in ``keys``; others are rejected."""
    keys = list(keys)
    pos = {k: i for i, k in enumerate(keys)}
    names = [v if lev is None else f"{v}{lev}" for v, lev in keys]
    rows = [r for r in records if (r.variable, r.level) in pos]
    vals = np.full((len(rows), len(keys)), np.nan)
    for n, r in enumerate(rows):
        vals[n, pos[(r.variable, r.level)]] = r.value
    # one record carries one variable, so project channel by channel to avoid
    # co-located records of different variables colliding with each other
    frame = empty_frame(spec, names)
    for ch in range(len(keys)):
        sel = np.flatnonzero(np.isfinite(vals[:, ch]))
        sub = project_nearest(
            [rows[k].lat for k in sel],
            [rows[k].lon for k in sel],
            vals[sel, ch],
            spec,
            channels=[names[ch]],
            times=[np.datetime64(rows[k].time, "s") for k in sel] if frame_start is not None else None,
            frame_start=frame_start,
        )
        frame.values[ch] = sub.values[0]
        frame.mask[ch] = sub.mask[0]
        frame.collisions += sub.collisions
        frame.rejected.extend(sub.rejected)
    frame.rejected.extend(f"{r.variable}@{r.level}: not a target channel" for r in records if (r.variable, r.level) not in pos)
    return frame


def project_swath(swath: SwathObs, spec: GridSpec, frame_start: datetime | None = None, channels: Sequence[str] | None = None) -> tuple[Frame, np.ndarray]:
    """Grid one platform's swath; returns the frame and a per-cell zenith angle grid."""
    names = channels or [f"{swath.instrument}_ch{k + 1}" for k in range(swath.n_channels)]
    vals = np.column_stack([swath.bt, swath.zenith])
    frame = project_nearest(
        swath.lat, swath.lon, vals, spec, channels=[*names, "zenith"], times=swath.time if frame_start else None, frame_start=frame_start
    )
    zen = frame.values[-1].copy()
    return Frame(frame.values[:-1], frame.mask[:-1], tuple(names), frame.rejected, frame.collisions), zen


def resolve_overlaps(frames, rng_seed: int) -> Frame:
    """Merge per-platform frames, keeping one platform per cell chosen uniformly at random.

    ``frames`` is a mapping platform key -> Frame (merged in sorted key order)
    or a sequence. A cell's contributors are the frames with any channel
    observed there; the chosen frame supplies all channels at that cell.
    """
    if isinstance(frames, Mapping):
        frames = [frames[k] for k in sorted(frames)]
    frames = list(frames)
    if not frames:
        raise LayoutError("no frames to merge")
    shape = frames[0].values.shape
    for f in frames[1:]:
        if f.values.shape != shape:
            raise LayoutError(f"frame shapes differ: {f.values.shape} vs {shape}")
    if len(frames) == 1:
        f = frames[0]
        return Frame(f.values.copy(), f.mask.copy(), f.channels, list(f.rejected), f.collisions)
    present = np.stack([f.observed for f in frames])  # [P, H, W]
    count = present.sum(axis=0)
    rng = np.random.default_rng(rng_seed)
    draw = np.floor(rng.random(count.shape) * np.maximum(count, 1)).astype(np.int64)
    # pick the draw-th contributor (0-based) in platform order
    rank = np.cumsum(present, axis=0) - 1
    chosen = present & (rank == draw[None])
    values = np.zeros(shape)
    mask = np.zeros(shape)
    for p, f in enumerate(frames):
        sel = chosen[p][None]
        values = np.where(sel, f.values, values)
        mask = np.where(sel, f.mask, mask)
    out = Frame(values, mask, frames[0].channels)
    out.collisions = int(np.sum(np.maximum(count - 1, 0)))
    for f in frames:
        out.rejected.extend(f.rejected)
    return out


def append_platform_metadata(frame: Frame, zenith: np.ndarray, platform_index: int, n_platforms: int, platform_names: Sequence[str] | None = None) -> Frame:
    """Add a zenith-angle channel and a one-hot platform block at observed cells."""
    if not 0 <= platform_index < n_platforms:
        raise IndexError(f"platform_index {platform_index} not in [0, {n_platforms})")
    obs = frame.observed.astype(np.float64)
    one_hot = np.zeros((n_platforms, *obs.shape))
    one_hot[platform_index] = obs
    values = np.concatenate([frame.values, (np.asarray(zenith) * obs)[None], one_hot])
    mask = np.concatenate([frame.mask, obs[None], np.repeat(obs[None], n_platforms, axis=0)])
    names = platform_names or [f"platform{k}" for k in range(n_platforms)]
    return Frame(values, mask, (*frame.channels, "zenith", *names), list(frame.rejected), frame.collisions)


def stack_temporal(frames: Sequence[Frame], window_start: datetime, window_hours: int | None = None) -> GriddedObsTensor:
    """Stack hourly frames (chronological order) into a [T, C, H, W] tensor."""
    frames = list(frames)
    if window_hours is not None and len(frames) != window_hours:
        raise WindowError(f"{len(frames)} frames for a {window_hours}-hour window")
    if not frames:
        raise WindowError("no frames to stack")
    shape = frames[0].values.shape
    if any(f.values.shape != shape for f in frames):
        raise LayoutError("frames differ in shape")
    values = np.stack([f.values for f in frames])
    mask = np.stack([f.mask for f in frames])
    return GriddedObsTensor(
        values=values,
        mask=mask,
        confidence=mask.copy(),
        window_start=window_start,
        window_hours=len(frames),
        channels=frames[0].channels,
        meta={"encoding": "temporal_stack", "collisions": sum(f.collisions for f in frames)},
    )


def collapse_window(tensor: GriddedObsTensor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per cell and channel, the most recent observed frame's (value, mask, confidence)."""
    m = tensor.mask > 0
    t = tensor.values.shape[0]
    # index of the last frame with mask set; -1 where never observed
    last = np.where(m.any(axis=0), t - 1 - np.argmax(m[::-1], axis=0), -1)
    k = np.clip(last, 0, None)[None]
    seen = last >= 0
    pick = lambda a: np.where(seen, np.take_along_axis(a, k, axis=0)[0], 0.0)
    return pick(tensor.values), seen.astype(np.float64), pick(tensor.confidence)


def hourly_frames_points(records: Sequence[PointObs], keys, spec: GridSpec, window_start: datetime, window_hours: int) -> list[Frame]:
    out = []
    for k in range(window_hours):
        t0 = window_start + timedelta(hours=k)
        t1 = t0 + timedelta(hours=1)
        out.append(project_points([r for r in records if t0 <= r.time < t1], keys, spec, t0))
    return out


def time_embedding(dt_hours, window_hours: float):
    phase = 2.0 * np.pi * np.asarray(dt_hours, dtype=np.float64) / window_hours
    return np.sin(phase), np.cos(phase)


def encode_time_embedding(
    profiles: Sequence[ProfileObs],
    window_start: datetime,
    window_hours: float,
    spec: GridSpec,
    n_layers: int = RO_LAYERS,
    rng_seed: int = 0,
) -> GriddedObsTensor:
    """Single-frame encoding: ``n_layers`` value channels plus (sin, cos) of the time offset.

    Profiles not already on the ``n_layers`` grid are resampled first. When
    several profiles share a cell one is retained uniformly at random.
    """
    layer_names = tuple(f"N{k:03d}" for k in range(n_layers))
    channels = (*layer_names, "time_sin", "time_cos")
    shape = (1, n_layers + 2, *spec.shape)
    values = np.zeros(shape)
    mask = np.zeros(shape)
    dts = []
    for p in profiles:
        dt = (p.time - window_start).total_seconds() / 3600.0
        if not 0.0 <= dt < window_hours:
            raise WindowError(f"profile at {p.time} outside [{window_start}, +{window_hours} h)")
        dts.append(dt)
    if profiles:
        rows, cols = nearest_cell([p.lat for p in profiles], [p.lon for p in profiles], spec)
        flat = rows * spec.n_lon + cols
        rng = np.random.default_rng(rng_seed)
        order = np.argsort(flat, kind="stable")
        uniq, start, counts = np.unique(flat[order], return_index=True, return_counts=True)
        picks = order[start + np.floor(rng.random(uniq.size) * counts).astype(np.int64)]
        for k in picks:
            p = profiles[k]
            v = p.values if p.values.size == n_layers else resample_profile(p, n_layers).values
            ok = np.isfinite(v)
            if not ok.any():
                continue
            i, j = rows[k], cols[k]
            values[0, :n_layers, i, j] = np.where(ok, v, 0.0)
            mask[0, :n_layers, i, j] = ok
            s, c = time_embedding(dts[k], window_hours)
            values[0, n_layers, i, j] = s
            values[0, n_layers + 1, i, j] = c
            mask[0, n_layers:, i, j] = 1.0
        collisions = int(len(profiles) - uniq.size)
    else:
        collisions = 0
    return GriddedObsTensor(
        values=values,
        mask=mask,
        confidence=mask.copy(),
        window_start=window_start,
        window_hours=window_hours,
        channels=channels,
        meta={"encoding": "time_embedding", "collisions": collisions, "profiles": len(profiles)},
    )


def decode_time_embedding(tensor: GriddedObsTensor, spec: GridSpec) -> list[tuple[float, float, float, np.ndarray]]:
    """Recover (lat, lon, dt_hours, layer values) for every observed cell, row-major order."""
    n_layers = tensor.values.shape[1] - 2
    observed = tensor.mask[0, n_layers] > 0
    out = []
    for i, j in zip(*np.nonzero(observed)):
        s = tensor.values[0, n_layers, i, j]
        c = tensor.values[0, n_layers + 1, i, j]
        dt = np.mod(np.arctan2(s, c), 2.0 * np.pi) * tensor.window_hours / (2.0 * np.pi)
        v = np.where(tensor.mask[0, :n_layers, i, j] > 0, tensor.values[0, :n_layers, i, j], np.nan)
        out.append((float(spec.lat_of_row(i)), float(spec.lon_of_col(j)), float(dt), v))
    return out


def _check_stats(mean, std, n):
    mean = np.asarray(mean, dtype=np.float64).ravel()
    std = np.asarray(std, dtype=np.float64).ravel()
    if mean.size != n or std.size != n:
        raise StatsError(f"stats cover {mean.size}/{std.size} channels, tensor has {n}")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
        raise StatsError("non-finite normalisation statistics")
    return mean, std


def normalize_channels(tensor: GriddedObsTensor, mean, std) -> GriddedObsTensor:
    """Observed cells become (v - mean) / std per channel; unobserved cells stay 0.

    Channels with std <= 0 are treated as constant: they are centred but not
    scaled, and listed under ``meta["constant_channels"]``.
    """
    c = tensor.values.shape[1]
    mean, std = _check_stats(mean, std, c)
    constant = std <= 0
    scale = np.where(constant, 1.0, std)
    shp = (1, c, 1, 1)
    values = np.where(tensor.mask > 0, (tensor.values - mean.reshape(shp)) / scale.reshape(shp), 0.0)
    meta = dict(tensor.meta, normalized=True, constant_channels=[tensor.channels[k] for k in np.flatnonzero(constant)])
    return GriddedObsTensor(values, tensor.mask, tensor.confidence, tensor.window_start, tensor.window_hours, tensor.channels, meta)


def denormalize_channels(tensor: GriddedObsTensor, mean, std) -> GriddedObsTensor:
    c = tensor.values.shape[1]
    mean, std = _check_stats(mean, std, c)
    scale = np.where(std <= 0, 1.0, std)
    shp = (1, c, 1, 1)
    values = np.where(tensor.mask > 0, tensor.values * scale.reshape(shp) + mean.reshape(shp), 0.0)
    meta = dict(tensor.meta, normalized=False)
    return GriddedObsTensor(values, tensor.mask, tensor.confidence, tensor.window_start, tensor.window_hours, tensor.channels, meta)


def channel_stats(tensors: Sequence[GriddedObsTensor]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and standard deviation over observed cells of a corpus."""
    c = tensors[0].values.shape[1]
    s = np.zeros(c)
    s2 = np.zeros(c)
    n = np.zeros(c)
    for t in tensors:
        m = t.mask > 0
        v = np.where(m, t.values, 0.0)
        s += v.sum(axis=(0, 2, 3))
        s2 += (v * v).sum(axis=(0, 2, 3))
        n += m.sum(axis=(0, 2, 3))
    mean = np.divide(s, n, out=np.zeros(c), where=n > 0)
    var = np.divide(s2, n, out=np.zeros(c), where=n > 0) - mean**2
    return mean, np.sqrt(np.clip(var, 0.0, None))


def save_stats(path, channels, mean, std):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"channels": list(channels), "mean": list(map(float, mean)), "std": list(map(float, std))}, fh, indent=1)


def load_stats(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return d["channels"], np.asarray(d["mean"]), np.asarray(d["std"])


def geopotential_from_height(z_height):
    return G0 * np.asarray(z_height, dtype=np.float64) if np.ndim(z_height) else G0 * float(z_height)


def convert_radiosonde_records(records: Sequence[PointObs]) -> list[PointObs]:
    """Map radiosonde Q (kg/kg) and geopotential height GH (m) onto registry R and Z.

    Q needs a temperature report at the same station, time and level; Q
    without a matching T is dropped. Other records pass through.
    """
    temps = {(r.lat, r.lon, r.time, r.level): r.value for r in records if r.variable == "T" and r.level is not None}
    out = []
    for r in records:
        if r.variable == "Q" and r.level is not None:
            t = temps.get((r.lat, r.lon, r.time, r.level))
            if t is None:
                continue
            rh = float(relative_humidity_from_q(r.value, t, r.level))
            out.append(PointObs(r.lat, r.lon, r.time, "R", rh, r.level, r.elevation, r.source, r.platform))
        elif r.variable == "GH" and r.level is not None:
            out.append(PointObs(r.lat, r.lon, r.time, "Z", float(geopotential_from_height(r.value)), r.level, r.elevation, r.source, r.platform))
        else:
            out.append(r)
    return out


def grid_radiosondes(records: Sequence[PointObs], registry: ChannelRegistry, spec: GridSpec) -> Frame:
    """Single-frame gridding of sounding levels onto the registry's upper-air channels."""
    keys = [registry[i].key for i in registry.upper_air_indices()]
    return project_points(convert_radiosonde_records(records), keys, spec)
