"""Gross-error screening and latitudinally zoned bi-weight outlier rejection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

ZONES = ("low", "middle", "high")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class QcConfig:
    gross_min: float = 50.0
    gross_max: float = 350.0
    z_threshold_bt: float = 6.0
    z_threshold_other: float = 4.0
    zone_edges: tuple[float, float] = (30.0, 60.0)
    censor: float = 7.5
    min_samples: int = 3

    def __post_init__(self):
        if self.z_threshold_bt <= 0 or self.z_threshold_other <= 0:
            raise ValueError("z-score thresholds must be positive")
        if not 0 < self.zone_edges[0] < self.zone_edges[1] < 90:
            raise ValueError("zone edges must satisfy 0 < low < high < 90")


@dataclass(frozen=True)
class BiweightStats:
    center: float
    spread: float
    n: int


def gross_check(values, vmin: float = 50.0, vmax: float = 350.0) -> np.ndarray:
    """Keep mask for brightness temperatures inside the closed range [vmin, vmax]."""
    v = np.asarray(values, dtype=np.float64)
    return (v >= vmin) & (v <= vmax)


def biweight_stats(sample, c: float = 7.5, max_iter: int = 10, tol: float = 1e-10) -> BiweightStats:
    """Tukey bi-weight location and scale.

    Weights are (1 - u^2)^2 with u = (x - center) / (c * MAD), zero for
    |u| >= 1. The location is iterated from the median until it moves by
    less than ``tol`` times the MAD; the MAD is held at its median-based
    value. The scale is the bi-weight midvariance about the final center.
    A zero MAD degenerates to (median, 0).
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < 3:
        raise InsufficientDataError(f"bi-weight needs at least 3 values, got {x.size}")
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    if mad == 0.0:
        return BiweightStats(med, 0.0, x.size)
    loc = med
    for _ in range(max_iter):
        with np.errstate(over="ignore"):
            u2 = np.clip((x - loc) / (c * mad), -1.0, 1.0) ** 2
        w = (1.0 - u2) ** 2
        step = np.sum(w * (x - loc)) / np.sum(w)
        loc += step
        if abs(step) < tol * mad:
            break
    with np.errstate(over="ignore"):
        u = (x - loc) / (c * mad)
    inside = np.abs(u) < 1.0
    u2 = u[inside] ** 2
    d = x[inside] - loc
    num = np.sqrt(x.size * np.sum(d * d * (1.0 - u2) ** 4))
    den = abs(np.sum((1.0 - u2) * (1.0 - 5.0 * u2)))
    spread = float(num / den) if den > 0 else 0.0
    return BiweightStats(float(loc), spread, int(x.size))


def zone_of(lats, edges: tuple[float, float] = (30.0, 60.0)) -> np.ndarray:
    """0 = low (|lat| < 30), 1 = middle (30 <= |lat| < 60), 2 = high (|lat| >= 60); hemispheres pooled."""
    a = np.abs(np.asarray(lats, dtype=np.float64))
    return np.where(a < edges[0], 0, np.where(a < edges[1], 1, 2))


@dataclass
class QcReport:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    @property
    def flagged(self) -> list[dict]:
        return [r for r in self.rows if r["flag"]]

    def write(self, path):
        cols = ["stream", "zone", "channel", "n", "kept", "rejected", "center", "spread", "threshold", "flag"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: r.get(k, "") for k in cols})


def zoned_screen(lats, values, is_brightness_temperature: bool, config: QcConfig = QcConfig(), stream: str = "", report: QcReport | None = None) -> np.ndarray:
    """Bi-weight z-score screening per latitude zone and channel.

    ``values`` is [N] or [N, C]; NaN entries are ignored and come back as
    not kept. An entry is kept when |v - center| <= threshold * spread.
    Zones with fewer than ``config.min_samples`` values keep everything and
    are flagged in the report.
    """
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    zones = zone_of(lats, config.zone_edges)
    thr = config.z_threshold_bt if is_brightness_temperature else config.z_threshold_other
    keep = np.isfinite(v)
    for z in range(3):
        rows = zones == z
        for ch in range(v.shape[1]):
            sel = rows & np.isfinite(v[:, ch])
            n = int(sel.sum())
            if n == 0:
                continue
            if n < config.min_samples:
                if report is not None:
                    report.add(stream=stream, zone=ZONES[z], channel=ch, n=n, kept=n, rejected=0, center="", spread="", threshold=thr, flag="insufficient")
                continue
            st = biweight_stats(v[sel, ch], c=config.censor)
            ok = np.abs(v[sel, ch] - st.center) <= thr * st.spread
            keep[np.flatnonzero(sel), ch] = ok
            if report is not None:
                report.add(
                    stream=stream, zone=ZONES[z], channel=ch, n=n, kept=int(ok.sum()), rejected=int(n - ok.sum()),
                    center=st.center, spread=st.spread, threshold=thr, flag="",
                )
    return keep[:, 0] if squeeze else keep


def screen_brightness_temperatures(lats, bt, config: QcConfig = QcConfig(), stream: str = "", report: QcReport | None = None) -> np.ndarray:
    """Gross check followed by zoned bi-weight screening of the survivors."""
    bt = np.asarray(bt, dtype=np.float64)
    gross = gross_check(bt, config.gross_min, config.gross_max)
    masked = np.where(gross, bt, np.nan)
    return zoned_screen(lats, masked, True, config, stream, report)
