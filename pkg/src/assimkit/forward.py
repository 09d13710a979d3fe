"""GNSS-RO refractivity forward model, vertical resampling and occultation geometry replication."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from datetime import date, datetime

import numpy as np

from .records import ProfileObs

G0 = 9.80665  # m s-2
RO_LAYERS = 512
RO_TOP_M = 50_000.0

# Magnus form over water (WMO 2008): es = 6.112 exp(17.62 t / (243.12 + t)), t in degC, es in hPa
MAGNUS_A = 6.112
MAGNUS_B = 17.62
MAGNUS_C = 243.12
EPSILON_MV = 0.622


class DomainError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def refractivity(P, T, e):
    """Microwave refractivity ``77.6 P/T + 3.73e5 e/T**2`` (P, e in hPa, T in K)."""
    P = np.asarray(P, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if np.any(T <= 0):
        raise DomainError("temperature must be positive")
    if np.any(P < 0) or np.any(e < 0):
        raise DomainError("pressure and vapour pressure must be non-negative")
    N = 77.6 * P / T + 3.73e5 * e / T**2
    return float(N) if N.ndim == 0 else N


def saturation_vapor_pressure(T):
    """Saturation vapour pressure in hPa over liquid water, T in kelvin."""
    t = np.asarray(T, dtype=np.float64) - 273.15
    return MAGNUS_A * np.exp(MAGNUS_B * t / (MAGNUS_C + t))


def vapor_pressure_from_rh(rh, T):
    """Vapour pressure (hPa) from relative humidity in percent."""
    return np.clip(np.asarray(rh, dtype=np.float64), 0.0, None) / 100.0 * saturation_vapor_pressure(T)


def vapor_pressure_from_q(q, P):
    q = np.asarray(q, dtype=np.float64)
    return q * np.asarray(P, dtype=np.float64) / (EPSILON_MV + (1.0 - EPSILON_MV) * q)


def relative_humidity_from_q(q, T, P):
    """Specific humidity (kg/kg) at pressure P (hPa) and temperature T (K) to RH in percent."""
    return 100.0 * vapor_pressure_from_q(q, P) / saturation_vapor_pressure(T)


def ro_layer_heights(n_layers: int = RO_LAYERS, top: float = RO_TOP_M) -> np.ndarray:
    """Mid-layer heights (m above mean sea level) of the uniform RO grid."""
    dz = top / n_layers
    return (np.arange(n_layers) + 0.5) * dz


def resample_profile(profile: ProfileObs, n_layers: int = RO_LAYERS, top: float = RO_TOP_M, method: str = "linear") -> ProfileObs:
    """Interpolate a height profile onto ``n_layers`` uniform layers below ``top``.

    Layers outside the observed span come back as NaN. ``method="log"``
    interpolates log(value), which is exact for exponentially decaying
    refractivity; it requires strictly positive values.
    """
    z = profile.coords
    v = profile.values
    ok = np.isfinite(v)
    z, v = z[ok], v[ok]
    if z.size < 2:
        raise InsufficientDataError("need at least two valid levels to resample")
    order = np.argsort(z)
    z, v = z[order], v[order]
    grid = ro_layer_heights(n_layers, top)
    inside = (grid >= z[0]) & (grid <= z[-1])
    out = np.full(n_layers, np.nan)
    if method == "linear":
        out[inside] = np.interp(grid[inside], z, v)
    elif method == "log":
        if np.any(v <= 0):
            raise DomainError("log interpolation needs positive values")
        out[inside] = np.exp(np.interp(grid[inside], z, np.log(v)))
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    return ProfileObs(profile.lat, profile.lon, profile.time, grid, out, profile.kind, profile.variable, profile.platform)


@dataclass(frozen=True, eq=False)
class AtmosColumn:
    """Pressure-level column: pressure (hPa), temperature (K), vapour pressure (hPa), geopotential (m2 s-2)."""

    pressure: np.ndarray
    temperature: np.ndarray
    vapor_pressure: np.ndarray
    geopotential: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=np.float64) for a in (self.pressure, self.temperature, self.vapor_pressure, self.geopotential)]
        if len({a.shape for a in arrs}) != 1:
            raise ValueError("column arrays must share a shape")
        p, t = arrs[0], arrs[1]
        if np.any(t <= 0) or np.any(p <= 0):
            raise DomainError("temperature and pressure must be positive")
        d = np.diff(p)
        if p.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("pressure must be monotone")
        for name, a in zip(("pressure", "temperature", "vapor_pressure", "geopotential"), arrs):
            object.__setattr__(self, name, a)

    @classmethod
    def from_relative_humidity(cls, pressure, temperature, rh, geopotential):
        return cls(pressure, temperature, vapor_pressure_from_rh(rh, temperature), geopotential)

    def refractivity(self) -> np.ndarray:
        return refractivity(self.pressure, self.temperature, self.vapor_pressure)

    @property
    def height(self) -> np.ndarray:
        return self.geopotential / G0


def simulate_ro_profile(column: AtmosColumn, lat: float, lon: float, time: datetime, platform: str = "simulated", resample: bool = True) -> ProfileObs:
    """Refractivity profile from a model column, optionally on the 512-layer grid.

    Height is geopotential / g0; interpolation is log-linear between the
    column's levels because refractivity decays roughly exponentially.
    """
    h = column.height
    n = column.refractivity()
    order = np.argsort(h)
    prof = ProfileObs(lat, lon, time, h[order], n[order], "gnss_ro_refractivity", "N", platform)
    return resample_profile(prof, method="log") if resample else prof


@dataclass
class ROGeometryTable:
    """Occultation locations harvested from a template year, bucketed by UTC hour."""

    buckets: dict[int, np.ndarray]

    def __post_init__(self):
        self.buckets = {int(h): np.asarray(v, dtype=np.float64).reshape(-1, 2) for h, v in self.buckets.items()}

    @classmethod
    def from_events(cls, lats, lons, hours) -> "ROGeometryTable":
        lats, lons, hours = (np.asarray(a) for a in (lats, lons, hours))
        return cls({h: np.column_stack([lats[hours == h], lons[hours == h]]) for h in range(24)})

    def bucket(self, hour: int) -> np.ndarray:
        if not 0 <= hour <= 23:
            raise ValueError("hour must be in 0..23")
        b = self.buckets.get(hour)
        if b is None or len(b) == 0:
            raise InsufficientDataError(f"geometry bucket for hour {hour} is empty")
        return b

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for h in sorted(self.buckets):
                for lat, lon in self.buckets[h]:
                    fh.write(json.dumps({"hour": h, "lat": float(lat), "lon": float(lon)}) + "\n")

    @classmethod
    def load(cls, path) -> "ROGeometryTable":
        rows = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    r = json.loads(line)
                    rows.setdefault(int(r["hour"]), []).append((r["lat"], r["lon"]))
        return cls(rows)


def sample_geometry(table: ROGeometryTable, hour: int, count: int, rng_seed: int, bounds: tuple[int, int] = (500, 2500)) -> np.ndarray:
    """Draw ``count`` occultation locations for ``hour``, without replacement when the bucket allows."""
    lo, hi = bounds
    if not lo <= count <= hi:
        raise ValueError(f"count {count} outside [{lo}, {hi}]")
    bucket = table.bucket(hour)
    rng = np.random.default_rng(rng_seed)
    if len(bucket) < count:
        warnings.warn(f"bucket {hour} holds {len(bucket)} locations < {count}; sampling with replacement", stacklevel=2)
        idx = rng.integers(0, len(bucket), size=count)
    else:
        idx = rng.choice(len(bucket), size=count, replace=False)
    return bucket[idx]


def replicate_date(target, template_year: int = 2022) -> date:
    """Same calendar day in the template year; 29 February falls back to the 28th."""
    d = target.date() if isinstance(target, datetime) else target
    try:
        return d.replace(year=template_year)
    except ValueError:
        if d.month == 2 and d.day == 29:
            return date(template_year, 2, 28)
        raise

