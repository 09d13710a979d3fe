"""Verification scores: station and RO departures, latitude-weighted RMSE/ACC,
normalized differences, paired significance tests, forecast activity,
effective lead time and tropical-cyclone position error.

Scores that cannot be computed (zero variance, zero reference) come back as
``NOT_A_SCORE`` (NaN), never as a silent zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np
from scipy import stats

from .forward import G0, refractivity, vapor_pressure_from_rh
from .grid import RegistryMismatchError, StateField, as_array, weights_array
from .observations import nearest_cell
from .records import PointObs, ProfileObs

NOT_A_SCORE = float("nan")
EARTH_RADIUS_KM = 6371.0
GNSS_MATCH_THRESHOLD = 1000.0  # m2 s-2


class NoDataError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def departure_scores(d) -> dict[str, float]:
    d = np.asarray(d, dtype=np.float64)
    if d.size == 0:
        raise NoDataError("no matched observations")
    mbe = float(np.mean(d))
    return {
        "rmse": float(np.sqrt(np.mean(d * d))),
        "mbe": mbe,
        "std": float(np.sqrt(np.mean((d - mbe) ** 2))),
        "n": int(d.size),
    }


def insitu_departures(field: StateField, obs: Sequence[PointObs]) -> np.ndarray:
    """H(x) - y with H the nearest-grid-cell lookup; records for unknown channels are skipped."""
    keep = [o for o in obs if (o.variable, o.level) in field.registry]
    if not keep:
        return np.empty(0)
    rows, cols = nearest_cell([o.lat for o in keep], [o.lon for o in keep], field.grid)
    ch = np.array([field.registry.index(o.variable, o.level) for o in keep])
    model = field.data[ch, rows, cols].astype(np.float64)
    return model - np.array([o.value for o in keep])


def score_insitu(field: StateField, obs: Sequence[PointObs], kind: str = "rmse"):
    """RMSE, MBE or STD of model-minus-observation departures (``kind="all"`` returns a dict)."""
    s = departure_scores(insitu_departures(field, obs))
    return s if kind == "all" else s[kind]


def model_refractivity_column(field: StateField, i: int, j: int):
    """Refractivity and geopotential on the field's pressure levels at one grid cell."""
    levels = sorted({c.level for c in field.registry if c.level is not None})
    p = np.array(levels, dtype=np.float64)
    t = np.array([field.data[field.registry.index("T", lv), i, j] for lv in levels], dtype=np.float64)
    r = np.array([field.data[field.registry.index("R", lv), i, j] for lv in levels], dtype=np.float64)
    z = np.array([field.data[field.registry.index("Z", lv), i, j] for lv in levels], dtype=np.float64)
    return refractivity(p, t, vapor_pressure_from_rh(r, t)), z


def gnss_departures(field: StateField, profiles: Sequence[ProfileObs], threshold: float = GNSS_MATCH_THRESHOLD) -> np.ndarray:
    """Relative departures (H(x) - y) / H(x) at vertically matched levels.

    For every model pressure level the observed layer with the closest
    geopotential (g0 * height) is taken; the pair counts only when the
    geopotential difference is strictly below ``threshold``.
    """
    if not profiles:
        return np.empty(0)
    rows, cols = nearest_cell([p.lat for p in profiles], [p.lon for p in profiles], field.grid)
    out = []
    for prof, i, j in zip(profiles, rows, cols):
        ok = np.isfinite(prof.values)
        if not ok.any():
            continue
        phi_obs = G0 * prof.coords[ok]
        n_obs = prof.values[ok]
        n_mod, phi_mod = model_refractivity_column(field, i, j)
        for nm, pm in zip(n_mod, phi_mod):
            k = int(np.argmin(np.abs(phi_obs - pm)))
            if abs(phi_obs[k] - pm) < threshold:
                out.append((nm - n_obs[k]) / nm)
    return np.asarray(out, dtype=np.float64)


def score_gnss(field: StateField, profiles: Sequence[ProfileObs], kind: str = "rmse", threshold: float = GNSS_MATCH_THRESHOLD):
    d = gnss_departures(field, profiles, threshold)
    if d.size == 0:
        raise NoDataError("no vertically matched RO levels")
    s = departure_scores(d)
    return s if kind == "all" else s[kind]


def _layout(x, y):
    if isinstance(x, StateField) and isinstance(y, StateField) and not x.same_layout(y):
        raise RegistryMismatchError("fields differ in grid or registry")
    a, b = as_array(x), as_array(y)
    if a.shape != b.shape:
        raise RegistryMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def wrmse(forecast, truth, w) -> np.ndarray:
    """Per-channel sqrt(mean(alpha_i * (x - xhat)^2))."""
    a, b = _layout(forecast, truth)
    alpha = weights_array(w, a.shape[-2])
    return np.sqrt(np.mean(alpha[:, None] * (a - b) ** 2, axis=(-2, -1)))


def acc(forecast, truth, climatology, w) -> np.ndarray:
    """Per-channel latitude-weighted anomaly correlation; NaN where an anomaly has zero energy."""
    a, b = _layout(forecast, truth)
    _, m = _layout(forecast, climatology)
    alpha = weights_array(w, a.shape[-2])[:, None]
    fa, ta = a - m, b - m
    num = np.sum(alpha * fa * ta, axis=(-2, -1))
    den = np.sqrt(np.sum(alpha * fa * fa, axis=(-2, -1)) * np.sum(alpha * ta * ta, axis=(-2, -1)))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), NOT_A_SCORE)
    return np.clip(r, -1.0, 1.0)


def normalized_diff(score_a, score_b):
    a = np.asarray(score_a, dtype=np.float64)
    b = np.asarray(score_b, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(b != 0, (a - b) / np.where(b != 0, b, 1.0), NOT_A_SCORE)
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class ScoreSeries:
    timestamps: tuple
    scores: np.ndarray
    key: str = ""

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.shape != (len(self.timestamps),):
            raise ValueError("timestamps and scores differ in length")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "scores", s)


@dataclass(frozen=True)
class TTestResult:
    t: float
    ci_low: float
    ci_high: float
    mean: float
    n: int
    n_eff: float

    @property
    def significant(self) -> bool:
        return self.ci_low > 0 or self.ci_high < 0


def paired_t_test(series_a: ScoreSeries, series_b: ScoreSeries, confidence: float = 0.95, lag1_correction: bool = False) -> TTestResult:
    """t-test on per-time normalized differences (a - b) / b.

    With ``lag1_correction`` the sample size is deflated to n (1 - r1) / (1 + r1)
    for lag-1 autocorrelation r1 > 0. Zero-variance samples give t = 0 when
    the mean is 0 and +/-inf otherwise, with a zero-width interval.
    """
    if series_a.timestamps != series_b.timestamps:
        raise ValueError("series are not aligned in time")
    n = len(series_a.scores)
    if n < 2:
        raise InsufficientDataError("paired t-test needs n >= 2")
    d = normalized_diff(series_a.scores, series_b.scores)
    if np.any(~np.isfinite(d)):
        raise ValueError("reference series contains zeros")
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    n_eff = float(n)
    if lag1_correction and sd > 0:
        dc = d - mean
        r1 = float(np.sum(dc[1:] * dc[:-1]) / np.sum(dc * dc))
        if r1 > 0:
            n_eff = max(2.0, n * (1 - r1) / (1 + r1))
    if sd == 0.0:
        t = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TTestResult(t, mean, mean, mean, n, n_eff)
    se = sd / math.sqrt(n_eff)
    q = float(stats.t.ppf(0.5 + confidence / 2.0, n_eff - 1))
    return TTestResult(mean / se, mean - q * se, mean + q * se, mean, n, n_eff)


def activity(forecast, climatology, w) -> np.ndarray:
    """Per-channel latitude-weighted standard deviation of forecast anomalies."""
    a, m = _layout(forecast, climatology)
    alpha = weights_array(w, a.shape[-2])[:, None]
    anom = a - m
    wsum = np.sum(alpha * np.ones_like(anom), axis=(-2, -1))
    mu = np.sum(alpha * anom, axis=(-2, -1)) / wsum
    var = np.sum(alpha * (anom - mu[..., None, None]) ** 2, axis=(-2, -1)) / wsum
    return np.sqrt(var)


def forecast_activity(forecast, climatology, reference_activity, w):
    ref = np.asarray(reference_activity, dtype=np.float64)
    if np.any(ref <= 0):
        raise ValueError("reference activity must be positive")
    r = activity(forecast, climatology, w) / ref
    return float(r) if np.ndim(r) == 0 else r


def effective_lead_time(leads, acc_series, threshold: float = 0.6, interpolate: bool = False) -> float:
    """Largest lead with ACC >= threshold; 0 if none.

    With ``interpolate`` the crossing between that lead and the next one is
    found by linear interpolation.
    """
    leads = np.asarray(leads, dtype=np.float64)
    a = np.asarray(acc_series, dtype=np.float64)
    if leads.shape != a.shape:
        raise ValueError("leads and scores differ in length")
    if np.any(np.diff(leads) <= 0):
        raise ValueError("lead axis must increase")
    hit = np.flatnonzero(a >= threshold)
    if hit.size == 0:
        return 0.0
    k = int(hit[-1])
    if interpolate and k + 1 < a.size and a[k] != a[k + 1]:
        frac = (a[k] - threshold) / (a[k] - a[k + 1])
        return float(leads[k] + frac * (leads[k + 1] - leads[k]))
    return float(leads[k])


def great_circle_km(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_KM):
    p1, p2 = np.deg2rad(lat1), np.deg2rad(lat2)
    dl = np.deg2rad(np.asarray(lon2, dtype=np.float64) - lon1)
    a = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    d = 2.0 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class TCTrack:
    storm_id: str
    times: tuple[datetime, ...]
    lats: tuple[float, ...]
    lons: tuple[float, ...]

    def __post_init__(self):
        if not len(self.times) == len(self.lats) == len(self.lons):
            raise ValueError("track arrays differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("track times must increase strictly")

    def position(self, t: datetime) -> tuple[float, float]:
        try:
            k = self.times.index(t)
        except ValueError:
            raise NoDataError(f"track {self.storm_id} has no point at {t}") from None
        return self.lats[k], self.lons[k]


def track_error(forecast: TCTrack, best: TCTrack, lead_hours: float) -> float:
    """Great-circle distance (km) between forecast and best-track positions at init + lead."""
    valid = forecast.times[0] + timedelta(hours=lead_hours)
    la, lo = forecast.position(valid)
    lb, lob = best.position(valid)
    return great_circle_km(la, lo, lb, lob)


def read_tracks(path) -> dict[str, TCTrack]:
    """Tracks from a delimiter-separated file with columns storm_id, time, lat, lon."""
    pts: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            pts.setdefault(row["storm_id"], []).append((datetime.fromisoformat(row["time"]), float(row["lat"]), float(row["lon"])))
    out = {}
    for sid, p in pts.items():
        p.sort()
        out[sid] = TCTrack(sid, tuple(x[0] for x in p), tuple(x[1] for x in p), tuple(x[2] for x in p))
    return out


SCORECARD_COLUMNS = ("variable", "level", "lead", "score", "value", "n", "t", "ci_low", "ci_high")


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if not np.isfinite(v) else f"{float(v):.10g}"
    return str(v)


def write_scorecard(path, rows: Sequence[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORECARD_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in SCORECARD_COLUMNS])


def field_scorecard(forecast: StateField, truth: StateField, w, lead_hours: float, climatology: StateField | None = None) -> list[dict]:
    rm = wrmse(forecast, truth, w)
    ac = acc(forecast, truth, climatology, w) if climatology is not None else None
    rows = []
    for k, ch in enumerate(forecast.registry):
        n = forecast.grid.n_lat * forecast.grid.n_lon
        rows.append({"variable": ch.name, "level": "" if ch.level is None else ch.level, "lead": lead_hours, "score": "wrmse", "value": rm[k], "n": n})
        if ac is not None:
            rows.append({"variable": ch.name, "level": "" if ch.level is None else ch.level, "lead": lead_hours, "score": "acc", "value": ac[k], "n": n})
    return rows

