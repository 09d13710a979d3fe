"""Grid geometry, channel registry, latitude weights and the StateField container."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

PRESSURE_LEVELS = (50, 100, 150, 200, 250, 300, 400, 500, 600, 700, 850, 925, 1000)
UPPER_AIR_VARIABLES = ("Z", "T", "U", "V", "R")
SURFACE_VARIABLES = ("T2m", "MSLP", "U10m", "V10m")
PRECIP_VARIABLE = "TP"

UNITS = {
    "Z": "m2 s-2",
    "T": "K",
    "U": "m s-1",
    "V": "m s-1",
    "R": "%",
    "T2m": "K",
    "MSLP": "Pa",
    "U10m": "m s-1",
    "V10m": "m s-1",
    "TP": "mm",
}

STATE_KINDS = ("analysis", "background", "forecast", "climatology")


class InvalidGridError(ValueError):
    pass


class RegistryMismatchError(ValueError):
    pass


class NonFiniteStateError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Regular global latitude/longitude grid with cell-centred rows and columns.

    Rows run north to south, row ``i`` sits at ``90 - (i + 0.5) * resolution``.
    Column ``j`` sits at ``(j + 0.5) * resolution`` east, and column 0 neighbours
    column ``n_lon - 1``.
    """

    n_lat: int = 720
    n_lon: int = 1440
    resolution: float = 0.25

    def __post_init__(self):
        if self.n_lat < 1 or self.n_lon < 1:
            raise InvalidGridError("grid needs at least one row and one column")
        if abs(self.n_lat * self.resolution - 180.0) > 1e-9:
            raise InvalidGridError(f"n_lat * resolution must be 180, got {self.n_lat * self.resolution}")
        if abs(self.n_lon * self.resolution - 360.0) > 1e-9:
            raise InvalidGridError(f"n_lon * resolution must be 360, got {self.n_lon * self.resolution}")

    @classmethod
    def from_shape(cls, n_lat: int, n_lon: int) -> "GridSpec":
        return cls(n_lat=n_lat, n_lon=n_lon, resolution=180.0 / n_lat)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_lat, self.n_lon)

    @property
    def lats(self) -> np.ndarray:
        return 90.0 - (np.arange(self.n_lat) + 0.5) * self.resolution

    @property
    def lons(self) -> np.ndarray:
        return (np.arange(self.n_lon) + 0.5) * self.resolution

    def lat_of_row(self, i):
        return 90.0 - (np.asarray(i) + 0.5) * self.resolution

    def lon_of_col(self, j):
        return (np.asarray(j) + 0.5) * self.resolution


@dataclass(frozen=True)
class LatWeights:
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def latitude_weights(spec) -> LatWeights:
    """Area weights per latitude row, normalised so they sum to the row count.

    ``spec`` is a :class:`GridSpec` or a sequence of row latitudes in degrees.
    """
    lats = spec.lats if isinstance(spec, GridSpec) else np.asarray(spec, dtype=np.float64).ravel()
    if lats.size < 1:
        raise InvalidGridError("need at least one latitude row")
    if np.any(np.abs(lats) > 90.0):
        raise InvalidGridError("latitudes must lie in [-90, 90]")
    # exact poles get zero area rather than cos(pi/2) rounding noise
    cos = np.where(np.abs(lats) == 90.0, 0.0, np.clip(np.cos(np.deg2rad(lats)), 0.0, None))
    total = cos.sum(dtype=np.float64)
    if total <= 0.0:
        raise InvalidGridError("degenerate grid: every row has cos(lat) <= 0")
    return LatWeights(lats.size * cos / total)


@dataclass(frozen=True)
class Channel:
    name: str
    level: int | None
    units: str

    @property
    def key(self) -> tuple[str, int | None]:
        return (self.name, self.level)

    def label(self) -> str:
        return self.name if self.level is None else f"{self.name}{self.level}"


@dataclass(frozen=True)
class ChannelRegistry:
    """Ordered channel list: Z, T, U, V, R each at 50..1000 hPa, then surface fields."""

    entries: tuple[Channel, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for i, ch in enumerate(self.entries):
            if ch.key in index:
                raise ValueError(f"duplicate channel {ch.key}")
            index[ch.key] = i
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> Channel:
        return self.entries[i]

    def index(self, name: str, level: int | None = None) -> int:
        try:
            return self._index[(name, level)]
        except KeyError:
            raise KeyError(f"channel {name}@{level} not in registry") from None

    def __contains__(self, key) -> bool:
        return tuple(key) in self._index

    @property
    def labels(self) -> list[str]:
        return [c.label() for c in self.entries]

    def to_records(self) -> list[dict]:
        return [{"name": c.name, "level": c.level, "units": c.units} for c in self.entries]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "ChannelRegistry":
        return cls(tuple(Channel(r["name"], r.get("level"), r.get("units", "")) for r in records))

    def upper_air_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.entries) if c.level is not None]

    def surface_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.entries) if c.level is None]


def make_channel_registry(include_precip: bool = True) -> ChannelRegistry:
    entries = [Channel(v, p, UNITS[v]) for v in UPPER_AIR_VARIABLES for p in PRESSURE_LEVELS]
    entries += [Channel(v, None, UNITS[v]) for v in SURFACE_VARIABLES]
    if include_precip:
        entries.append(Channel(PRECIP_VARIABLE, None, UNITS[PRECIP_VARIABLE]))
    return ChannelRegistry(tuple(entries))


def _as_datetime(t) -> datetime:
    if isinstance(t, datetime):
        return t
    return datetime.fromisoformat(str(t))


@dataclass(frozen=True, eq=False)
class StateField:
    """One multi-channel global snapshot ``data[C, n_lat, n_lon]``.

    Data is kept as float64 when handed float64 and as float32 otherwise;
    files on disk are always 32-bit.
    """

    grid: GridSpec
    registry: ChannelRegistry
    data: np.ndarray
    valid_time: datetime
    kind: str = "analysis"

    def __post_init__(self):
        data = np.asarray(self.data)
        data = np.ascontiguousarray(data, dtype=np.float64 if data.dtype == np.float64 else np.float32)
        if data.shape != (len(self.registry), *self.grid.shape):
            raise RegistryMismatchError(
                f"data shape {data.shape} does not match registry/grid {(len(self.registry), *self.grid.shape)}"
            )
        if not np.all(np.isfinite(data)):
            raise NonFiniteStateError("state field contains non-finite values")
        if self.kind not in STATE_KINDS:
            raise ValueError(f"unknown state kind {self.kind!r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "valid_time", _as_datetime(self.valid_time))

    def replace(self, data=None, valid_time=None, kind=None) -> "StateField":
        return StateField(
            self.grid,
            self.registry,
            self.data if data is None else data,
            self.valid_time if valid_time is None else valid_time,
            self.kind if kind is None else kind,
        )

    def channel(self, name: str, level: int | None = None) -> np.ndarray:
        return self.data[self.registry.index(name, level)]

    def same_layout(self, other: "StateField") -> bool:
        return self.grid == other.grid and self.registry == other.registry

    @classmethod
    def zeros(cls, grid: GridSpec, registry: ChannelRegistry, valid_time, kind="analysis", dtype=np.float32) -> "StateField":
        return cls(grid, registry, np.zeros((len(registry), *grid.shape), dtype), valid_time, kind)


def check_same_layout(a: StateField, b: StateField):
    if not a.same_layout(b):
        raise RegistryMismatchError("state fields differ in grid or channel registry")


def as_array(x) -> np.ndarray:
    """Float64 view of a StateField or array-like, for reductions."""
    if isinstance(x, StateField):
        return x.data.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def weights_array(w, n_lat: int | None = None) -> np.ndarray:
    arr = np.asarray(w.weights if isinstance(w, LatWeights) else w, dtype=np.float64)
    if n_lat is not None and arr.shape != (n_lat,):
        raise InvalidGridError(f"latitude weights have length {arr.size}, grid has {n_lat} rows")
    return arr


def registry_subset(registry: ChannelRegistry, keys: Sequence[tuple[str, int | None]]) -> ChannelRegistry:
    return ChannelRegistry(tuple(registry[registry.index(*k)] for k in keys))
