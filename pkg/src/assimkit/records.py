"""Raw observation records and their line-delimited JSON representation.

One record per line. Every record has ``type`` (``point``, ``profile`` or
``swath``), ``lat``/``lon`` in degrees and an ISO-8601 ``time``.

point:    variable, value, optional level (hPa), elevation (m), source
          (land_station | marine | radiosonde), platform
profile:  kind (gnss_ro_refractivity | radiosonde_profile), coords (m for
          GNSS-RO heights, hPa for radiosondes), values, optional variable,
          platform
swath:    one scan row or granule; lat, lon, time and zenith are lists,
          bt is a list of per-pixel channel lists; instrument, platform
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

SOURCES = ("land_station", "marine", "radiosonde")
PROFILE_KINDS = ("gnss_ro_refractivity", "radiosonde_profile")


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class PointObs:
    lat: float
    lon: float
    time: datetime
    variable: str
    value: float
    level: int | None = None
    elevation: float | None = None
    source: str = "land_station"
    platform: str = ""

    def __post_init__(self):
        if not abs(self.lat) <= 90.0:
            raise RecordError(f"latitude {self.lat} outside [-90, 90]")
        if self.source not in SOURCES:
            raise RecordError(f"unknown source {self.source!r}")


@dataclass(frozen=True, eq=False)
class ProfileObs:
    lat: float
    lon: float
    time: datetime
    coords: np.ndarray
    values: np.ndarray
    kind: str = "gnss_ro_refractivity"
    variable: str = "N"
    platform: str = ""

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if coords.shape != values.shape or coords.ndim != 1:
            raise RecordError("profile coords and values must be 1-D and the same length")
        if not abs(self.lat) <= 90.0:
            raise RecordError(f"latitude {self.lat} outside [-90, 90]")
        if self.kind not in PROFILE_KINDS:
            raise RecordError(f"unknown profile kind {self.kind!r}")
        d = np.diff(coords)
        if coords.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise RecordError("profile levels must be strictly monotone")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class SwathObs:
    lat: np.ndarray
    lon: np.ndarray
    time: np.ndarray  # datetime64[s]
    bt: np.ndarray  # [pixels, channels], kelvin
    zenith: np.ndarray
    instrument: str
    platform: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        lat = np.asarray(self.lat, dtype=np.float64)
        bt = np.atleast_2d(np.asarray(self.bt, dtype=np.float64))
        zen = np.asarray(self.zenith, dtype=np.float64)
        if bt.shape[0] != lat.size or zen.size != lat.size:
            raise RecordError("swath arrays disagree in pixel count")
        if np.any((zen < 0) | (zen > 90)):
            raise RecordError("zenith angle outside [0, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", np.asarray(self.lon, dtype=np.float64))
        object.__setattr__(self, "time", np.asarray(self.time, dtype="datetime64[s]"))
        object.__setattr__(self, "bt", bt)
        object.__setattr__(self, "zenith", zen)

    @property
    def n_channels(self) -> int:
        return self.bt.shape[1]


def _time(s) -> datetime:
    return datetime.fromisoformat(s)


def parse_record(obj: dict):
    kind = obj.get("type")
    if kind == "point":
        return PointObs(
            lat=float(obj["lat"]),
            lon=float(obj["lon"]),
            time=_time(obj["time"]),
            variable=str(obj["variable"]),
            value=float(obj["value"]),
            level=None if obj.get("level") is None else int(obj["level"]),
            elevation=obj.get("elevation"),
            source=obj.get("source", "land_station"),
            platform=obj.get("platform", ""),
        )
    if kind == "profile":
        return ProfileObs(
            lat=float(obj["lat"]),
            lon=float(obj["lon"]),
            time=_time(obj["time"]),
            coords=np.asarray(obj["coords"], dtype=np.float64),
            values=np.asarray([np.nan if v is None else v for v in obj["values"]], dtype=np.float64),
            kind=obj.get("kind", "gnss_ro_refractivity"),
            variable=obj.get("variable", "N"),
            platform=obj.get("platform", ""),
        )
    if kind == "swath":
        return SwathObs(
            lat=obj["lat"],
            lon=obj["lon"],
            time=np.array([np.datetime64(t, "s") for t in obj["time"]]),
            bt=obj["bt"],
            zenith=obj["zenith"],
            instrument=obj["instrument"],
            platform=obj["platform"],
        )
    raise RecordError(f"unknown record type {kind!r}")


def record_to_dict(rec) -> dict:
    if isinstance(rec, PointObs):
        out = {
            "type": "point",
            "lat": rec.lat,
            "lon": rec.lon,
            "time": rec.time.isoformat(),
            "variable": rec.variable,
            "value": rec.value,
            "source": rec.source,
        }
        if rec.level is not None:
            out["level"] = rec.level
        if rec.elevation is not None:
            out["elevation"] = rec.elevation
        if rec.platform:
            out["platform"] = rec.platform
        return out
    if isinstance(rec, ProfileObs):
        return {
            "type": "profile",
            "lat": rec.lat,
            "lon": rec.lon,
            "time": rec.time.isoformat(),
            "kind": rec.kind,
            "variable": rec.variable,
            "platform": rec.platform,
            "coords": rec.coords.tolist(),
            "values": [None if not np.isfinite(v) else float(v) for v in rec.values],
        }
    if isinstance(rec, SwathObs):
        return {
            "type": "swath",
            "instrument": rec.instrument,
            "platform": rec.platform,
            "lat": rec.lat.tolist(),
            "lon": rec.lon.tolist(),
            "time": [str(t) for t in rec.time],
            "zenith": rec.zenith.tolist(),
            "bt": rec.bt.tolist(),
        }
    raise TypeError(f"not an observation record: {type(rec).__name__}")


def read_records(path) -> tuple[list, list[str]]:
    """Parse a line-delimited file; bad lines are collected, not raised."""
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(parse_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(f"{Path(path).name}:{lineno}: {exc}")
    return records, errors


def write_records(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), sort_keys=True) + "\n")
