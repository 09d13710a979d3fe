"""Sounder channel thinning by Jacobian peak pressure, then greedy gap filling."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

BANDS = ("co2", "h2o", "window")


@dataclass(frozen=True, eq=False)
class ChannelJacobian:
    channel_id: int
    band: str
    pressures: np.ndarray
    jacobian: np.ndarray
    peak_pressure: float = field(init=False)
    peak_value: float = field(init=False)

    def __post_init__(self):
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}")
        p = np.asarray(self.pressures, dtype=np.float64)
        j = np.asarray(self.jacobian, dtype=np.float64)
        if p.shape != j.shape or p.ndim != 1 or p.size == 0:
            raise ValueError("pressures and jacobian must be equal-length 1-D arrays")
        k = int(np.argmax(np.abs(j)))
        object.__setattr__(self, "pressures", p)
        object.__setattr__(self, "jacobian", j)
        object.__setattr__(self, "peak_pressure", float(p[k]))
        object.__setattr__(self, "peak_value", float(abs(j[k])))


@dataclass(frozen=True)
class GapFillResult:
    channels: list
    added: list
    partial: bool
    shortfall: dict


def bin_index(peak_pressure, increment: float = 20.0, floor: float = 20.0):
    """Bin number for peaks at or above ``floor``; -1 for peaks above the floor level (p < floor)."""
    p = np.asarray(peak_pressure, dtype=np.float64)
    return np.where(p < floor, -1, np.floor((p - floor) / increment)).astype(np.int64)


def interval_sample(channels: Sequence[ChannelJacobian], increment: float = 20.0, floor: float = 20.0) -> list[ChannelJacobian]:
    """Keep one channel per ``increment``-hPa bin of peak pressure, per band.

    Bins are [floor + k*inc, floor + (k+1)*inc). The representative is the
    channel with the largest peak |jacobian|, ties going to the lowest id.
    Channels peaking at pressures below ``floor`` are all kept. The result
    is sorted by (band, peak pressure, id).
    """
    if increment <= 0:
        raise ValueError("increment must be positive")
    best: dict[tuple[str, int], ChannelJacobian] = {}
    kept = []
    for ch in channels:
        b = int(bin_index(ch.peak_pressure, increment, floor))
        if b < 0:
            kept.append(ch)
            continue
        cur = best.get((ch.band, b))
        if cur is None or (ch.peak_value, -ch.channel_id) > (cur.peak_value, -cur.channel_id):
            best[(ch.band, b)] = ch
    kept.extend(best.values())
    return sorted(kept, key=_order)


def _order(ch: ChannelJacobian):
    return (BANDS.index(ch.band), ch.peak_pressure, ch.channel_id)


def min_gap(peaks) -> float:
    p = np.sort(np.asarray(list(peaks), dtype=np.float64))
    return float(np.min(np.diff(p))) if p.size > 1 else float("inf")


def gap_fill(retained: Sequence[ChannelJacobian], candidates: Sequence[ChannelJacobian], target_counts: Mapping[str, int]) -> GapFillResult:
    """Add candidates per band until each band reaches its target count.

    Each pick is the candidate whose peak pressure is farthest from the
    nearest peak already selected in its band (ties: lowest id). A band
    with no selected channels takes its lowest-id candidate first. Bands
    whose candidates run out are reported in ``shortfall``.
    """
    ids = {c.channel_id for c in retained}
    if any(c.channel_id in ids for c in candidates):
        raise ValueError("candidates must be disjoint from the retained set")
    selected = list(retained)
    added = []
    shortfall = {}
    for band, target in target_counts.items():
        have = [c.peak_pressure for c in selected if c.band == band]
        pool = sorted((c for c in candidates if c.band == band), key=lambda c: c.channel_id)
        while len(have) < target and pool:
            if have:
                h = np.asarray(have)
                gaps = [float(np.min(np.abs(h - c.peak_pressure))) for c in pool]
                k = int(np.argmax(gaps))  # first maximum is the lowest id
            else:
                k = 0
            pick = pool.pop(k)
            selected.append(pick)
            added.append(pick)
            have.append(pick.peak_pressure)
        if len(have) < target:
            shortfall[band] = target - len(have)
    return GapFillResult(sorted(selected, key=_order), added, bool(shortfall), shortfall)


def band_counts(channels: Iterable[ChannelJacobian]) -> dict[str, int]:
    out = defaultdict(int)
    for c in channels:
        out[c.band] += 1
    return dict(out)


def _gaussian_jacobian(pressures, peak, amplitude, width=0.25):
    return amplitude * np.exp(-0.5 * (np.log(pressures / peak) / width) ** 2)


def synthetic_fixture(seed: int = 0):
    """Synthetic Jacobian table for a hyperspectral sounder.

    85 CO2 channels with peaks spread over the 16 bins from 20 to 340 hPa,
    23 H2O channels spread over the 9 bins from 300 to 480 hPa, and one
    window channel peaking at 1000 hPa. Returns (sounding channels, window
    channels).
    """
    rng = np.random.default_rng(seed)
    pressures = np.arange(1.0, 1101.0)
    out = []
    cid = 1

    def add(band, bins, n):
        nonlocal cid
        for k in range(n):
            lo = bins[k % len(bins)]
            peak = float(lo + rng.integers(0, 20))
            amp = float(rng.uniform(0.2, 1.0))
            out.append(ChannelJacobian(cid, band, pressures, _gaussian_jacobian(pressures, peak, amp)))
            cid += 1

    add("co2", [20 + 20 * k for k in range(16)], 85)
    add("h2o", [300 + 20 * k for k in range(9)], 23)
    window = [ChannelJacobian(cid, "window", pressures, _gaussian_jacobian(pressures, 1000.0, 0.9))]
    return out, window


def read_jacobians(path) -> list[ChannelJacobian]:
    """Long-format table with columns channel_id, band, pressure, jacobian."""
    rows = defaultdict(list)
    bands = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            cid = int(r["channel_id"])
            bands[cid] = r["band"]
            rows[cid].append((float(r["pressure"]), float(r["jacobian"])))
    out = []
    for cid in sorted(rows):
        p, j = np.array(sorted(rows[cid])).T
        out.append(ChannelJacobian(cid, bands[cid], p, j))
    return out


def write_jacobians(path, channels: Sequence[ChannelJacobian]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["channel_id", "band", "pressure", "jacobian"])
        for c in channels:
            for p, j in zip(c.pressures, c.jacobian):
                w.writerow([c.channel_id, c.band, repr(float(p)), repr(float(j))])


def write_channel_list(path, channels: Sequence[ChannelJacobian]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["channel_id", "band", "peak_pressure"])
        for c in channels:
            w.writerow([c.channel_id, c.band, f"{c.peak_pressure:g}"])
