"""Reader/writer for the OGF1 self-describing gridded field format.

Layout::

    b"OGF1GRID"                 8-byte magic
    uint32 little-endian        header length in bytes
    header                      UTF-8 JSON object
    blocks                      one float32 little-endian array per entry of
                                header["blocks"], each row-major
                                [channels, n_lat, n_lon], channel-major

The header always carries ``dims`` ([C, n_lat, n_lon]), ``channels`` (one
record per channel), ``valid_time`` (ISO-8601), ``kind`` and ``blocks``.
Tensors with a time axis fold it into the channel list: channel records
gain a ``frame`` index and ``dims`` holds ``T * C`` channels.
"""

from __future__ import annotations

import json
import struct
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .grid import ChannelRegistry, GridSpec, StateField

MAGIC = b"OGF1GRID"
_LEN = struct.Struct("<I")


class FormatError(ValueError):
    pass


def write_blocks(path, header: dict, blocks: dict[str, np.ndarray]):
    header = dict(header)
    header["blocks"] = list(blocks)
    dims = header["dims"]
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(payload)))
        fh.write(payload)
        for name, arr in blocks.items():
            arr = np.asarray(arr)
            if arr.size != int(np.prod(dims)):
                raise FormatError(f"block {name!r} has {arr.size} values, header dims {dims}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").reshape(dims).tobytes())


def read_blocks(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:8]!r}")
    (n,) = _LEN.unpack_from(raw, 8)
    try:
        header = json.loads(raw[12 : 12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header") from exc
    dims = tuple(header["dims"])
    count = int(np.prod(dims))
    offset = 12 + n
    blocks = {}
    for name in header.get("blocks", ["data"]):
        end = offset + 4 * count
        if end > len(raw):
            raise FormatError(f"{path}: truncated block {name!r}")
        blocks[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(dims).astype(np.float32)
        offset = end
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, blocks


def _grid_header(grid: GridSpec) -> dict:
    return {"n_lat": grid.n_lat, "n_lon": grid.n_lon, "resolution": grid.resolution}


def write_state(path, field: StateField, extra: dict | None = None):
    header = {
        "dims": [len(field.registry), *field.grid.shape],
        "grid": _grid_header(field.grid),
        "channels": field.registry.to_records(),
        "valid_time": field.valid_time.isoformat(),
        "kind": field.kind,
    }
    if extra:
        header["extra"] = extra
    write_blocks(path, header, {"data": field.data})


def read_state(path) -> StateField:
    header, blocks = read_blocks(path)
    g = header["grid"]
    return StateField(
        GridSpec(g["n_lat"], g["n_lon"], g["resolution"]),
        ChannelRegistry.from_records(header["channels"]),
        blocks["data"],
        datetime.fromisoformat(header["valid_time"]),
        header["kind"],
    )


def write_obs_tensor(path, tensor, grid: GridSpec):
    """Write a GriddedObsTensor; the time axis is folded into the channel records."""
    t, c = tensor.values.shape[:2]
    channels = [
        {"name": name, "frame": k, "time": (tensor.window_start + timedelta(hours=k)).isoformat()}
        for k in range(t)
        for name in tensor.channels
    ]
    header = {
        "dims": [t * c, *grid.shape],
        "grid": _grid_header(grid),
        "channels": channels,
        "valid_time": tensor.window_start.isoformat(),
        "kind": "observation",
        "window_hours": tensor.window_hours,
        "frames": t,
    }
    if tensor.meta:
        header["extra"] = tensor.meta
    blocks = {"values": tensor.values, "mask": tensor.mask, "confidence": tensor.confidence}
    write_blocks(path, header, {k: v.reshape(t * c, *grid.shape) for k, v in blocks.items()})


def read_obs_tensor(path):
    from .observations import GriddedObsTensor

    header, blocks = read_blocks(path)
    t = header["frames"]
    c = header["dims"][0] // t
    shape = (t, c, *header["dims"][1:])
    names = [rec["name"] for rec in header["channels"][:c]]
    return GriddedObsTensor(
        values=blocks["values"].reshape(shape).astype(np.float64),
        mask=blocks["mask"].reshape(shape).astype(np.float64),
        confidence=blocks["confidence"].reshape(shape).astype(np.float64),
        window_start=datetime.fromisoformat(header["valid_time"]),
        window_hours=header["window_hours"],
        channels=tuple(names),
        meta=header.get("extra", {}),
    )


def grid_from_header(path) -> GridSpec:
    header, _ = read_blocks(path)
    g = header["grid"]
    return GridSpec(g["n_lat"], g["n_lon"], g["resolution"])
