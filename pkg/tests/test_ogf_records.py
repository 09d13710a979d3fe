import json
from datetime import datetime

import numpy as np
import pytest

from assimkit.ogf import FormatError, read_obs_tensor, read_state, write_obs_tensor, write_state
from assimkit.observations import GriddedObsTensor
from assimkit.records import PointObs, ProfileObs, RecordError, SwathObs, read_records, write_records

from conftest import T0, random_state


def test_state_round_trip(tmp_path, small_grid, registry69, rng):
    x = random_state(small_grid, registry69, rng)
    p = tmp_path / "x.ogf"
    write_state(p, x)
    raw = p.read_bytes()
    assert raw[:8] == b"OGF1GRID"
    y = read_state(p)
    assert y.same_layout(x) and y.valid_time == x.valid_time and y.kind == x.kind
    np.testing.assert_array_equal(y.data, x.data.astype(np.float32))


def test_truncated_file_rejected(tmp_path, small_grid, registry69, rng):
    p = tmp_path / "x.ogf"
    write_state(p, random_state(small_grid, registry69, rng))
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError):
        read_state(p)
    p.write_bytes(b"NOTAGRID" + b"\0" * 20)
    with pytest.raises(FormatError):
        read_state(p)


def test_obs_tensor_round_trip(tmp_path, small_grid, rng):
    shape = (3, 2, *small_grid.shape)
    m = (rng.random(shape) < 0.1).astype(float)
    v = np.where(m > 0, rng.normal(size=shape), 0.0).astype(np.float32).astype(float)
    t = GriddedObsTensor(v, m, m.copy(), T0, 3, ("a", "b"), {"note": 1})
    p = tmp_path / "o.ogf"
    write_obs_tensor(p, t, small_grid)
    header = json.loads(p.read_bytes()[12 : 12 + int.from_bytes(p.read_bytes()[8:12], "little")])
    assert header["frames"] == 3 and len(header["channels"]) == 6
    u = read_obs_tensor(p)
    np.testing.assert_array_equal(u.values, v)
    np.testing.assert_array_equal(u.mask, m)
    assert u.channels == ("a", "b") and u.window_hours == 3 and u.meta == {"note": 1}


def test_records_round_trip_and_errors(tmp_path):
    recs = [
        PointObs(10.0, 20.0, T0, "T2m", 288.0, None, 12.0, "marine", "buoy1"),
        ProfileObs(-5.0, 100.0, T0, np.array([0.0, 1000.0, 2000.0]), np.array([300.0, 270.0, np.nan])),
        SwathObs([1.0, 2.0], [3.0, 4.0], np.array(["2022-01-01T00:10", "2022-01-01T00:20"], dtype="datetime64[s]"), [[200.0], [210.0]], [10.0, 20.0], "ATMS", "N20"),
    ]
    p = tmp_path / "r.jsonl"
    write_records(p, recs)
    with open(p, "a") as fh:
        fh.write('{"type": "point", "lat": 95, "lon": 0, "time": "2022-01-01T00:00:00", "variable": "T2m", "value": 1}\n')
        fh.write("not json\n")
    back, errors = read_records(p)
    assert len(back) == 3 and len(errors) == 2
    assert back[0] == recs[0]
    np.testing.assert_array_equal(back[1].values, recs[1].values)
    np.testing.assert_array_equal(back[2].bt, recs[2].bt)


def test_profile_must_be_monotone():
    with pytest.raises(RecordError):
        ProfileObs(0.0, 0.0, datetime(2022, 1, 1), np.array([0.0, 2.0, 1.0]), np.array([1.0, 2.0, 3.0]))
