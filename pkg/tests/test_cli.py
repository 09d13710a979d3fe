import csv
import json
import sys
import textwrap
import time
from datetime import datetime, timedelta

import numpy as np
import pytest

from assimkit.cli import main
from assimkit.grid import GridSpec, StateField, make_channel_registry
from assimkit.observations import GriddedObsTensor
from assimkit.ogf import read_obs_tensor, write_obs_tensor, write_state

from golden import GOLDEN_CONFIG, run_pipeline

T0 = datetime(2022, 1, 1)
DT = timedelta(hours=6)


def _write_config(path, values):
    path.write_text(json.dumps(values))
    return str(path)


def _log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_golden_run_fast_and_byte_stable(tmp_path):
    start = time.perf_counter()
    a = run_pipeline(tmp_path / "a")
    elapsed = time.perf_counter() - start
    b = run_pipeline(tmp_path / "b")
    assert all(rc == 0 for rc in a["rc"].values()), a["rc"]
    assert all(rc == 0 for rc in b["rc"].values()), b["rc"]
    assert elapsed < 60
    assert a["scorecard"].read_bytes() == b["scorecard"].read_bytes()
    assert (a["run"] / "trajectory.sha256").read_bytes() == (b["run"] / "trajectory.sha256").read_bytes()
    assert (a["run"] / "cycle_log.csv").read_bytes() == (b["run"] / "cycle_log.csv").read_bytes()
    rows = list(csv.DictReader(a["scorecard"].open()))
    leads = {int(r["lead"]) for r in rows if r["score"] == "wrmse"}
    assert leads == {6 * k for k in range(GOLDEN_CONFIG["cycle.forecast_steps"] + 1)}
    for name in ("insitu", "gnss_ro"):
        got = {r["score"]: r for r in rows if r["variable"] == name}
        assert set(got) == {"rmse", "mbe", "std"} and int(got["rmse"]["n"]) > 0
    cfg = json.loads((a["run"] / "run_config.json").read_text())
    assert cfg["dilation.radius"] == 3


def test_seed_changes_results(tmp_path):
    a = run_pipeline(tmp_path / "a", seed=0)
    b = run_pipeline(tmp_path / "b", seed=1)
    assert a["scorecard"].read_bytes() != b["scorecard"].read_bytes()


def test_forty_cycle_cold_start(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {"grid.n_lat": 16, "grid.n_lon": 32, "cycle.start": "cold", "cycle.forecast_steps": 2})
    out = tmp_path / "run"
    assert main(["cycle", "--config", cfg, "--out", str(out)]) == 0
    rows = _log(out / "cycle_log.csv")
    assert [int(r["step"]) for r in rows] == list(range(1, 41))
    assert rows[-1]["valid_time"] == (T0 + 40 * DT).isoformat()
    assert len(list(out.glob("analysis_*.ogf"))) == 40
    assert len(list((out / "forecast").glob("*.ogf"))) == 2
    assert (out / "cycle_timing.csv").exists()


def test_cli_cycle_contracts_to_constant_truth(tmp_path):
    grid, reg = GridSpec.from_shape(8, 16), make_channel_registry(False)
    c = 10.0
    truth, obs = tmp_path / "truth", tmp_path / "obs"
    truth.mkdir()
    obs.mkdir()
    shape = (1, len(reg), *grid.shape)
    for k in range(0, 12):
        t = T0 + k * DT
        write_state(truth / f"{k:02d}.ogf", StateField(grid, reg, np.full(shape[1:], c), t))
        tensor = GriddedObsTensor(np.full(shape, c), np.ones(shape), np.ones(shape), t, 1, tuple(reg.labels))
        write_obs_tensor(obs / f"{t:%Y%m%dT%H%M}.ogf", tensor, grid)
    cfg = _write_config(tmp_path / "c.json", {
        "grid.n_lat": 8, "grid.n_lon": 16, "cycle.start": "cold", "cycle.steps": 10, "cycle.forecast_steps": 1,
        "operators.gamma": 0.5, "operators.damping": 0.0, "operators.shift": 0,
    })
    out = tmp_path / "run"
    assert main(["cycle", "--config", cfg, "--out", str(out), "--obs-dir", str(obs), "--truth-dir", str(truth)]) == 0
    for r in _log(out / "cycle_log.csv"):
        n = int(r["step"])
        assert float(r["analysis_loss"]) == pytest.approx(c * 0.5**n, rel=1e-6)
        assert int(r["n_obs"]) == len(reg) * grid.n_lat * grid.n_lon


def test_encode_empty_and_bad_inputs(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {"grid.n_lat": 8, "grid.n_lon": 16})
    empty = tmp_path / "20220101T0000.jsonl"
    empty.write_text("")
    assert main(["encode", "--config", cfg, str(empty), "--out-dir", str(tmp_path / "e")]) == 0
    pts = read_obs_tensor(tmp_path / "e" / "20220101T0000.ogf")
    assert pts.mask.sum() == 0 and pts.values.sum() == 0
    bad = tmp_path / "20220101T0600.jsonl"
    bad.write_text('{"type": "point", "lat": 1}\nnot json\n')
    assert main(["encode", "--config", cfg, str(bad), "--out-dir", str(tmp_path / "b")]) == 1
    assert main(["encode", "--config", cfg, str(tmp_path / "missing.jsonl"), "--out-dir", str(tmp_path / "m")]) == 1


def test_config_errors_are_data_errors(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {"grid.nlat": 8})
    assert main(["cycle", "--config", cfg, "--out", str(tmp_path / "r")]) == 1
    cfg = _write_config(tmp_path / "d.json", {"grid.n_lat": 8, "grid.n_lon": 16})
    assert main(["cycle", "--config", cfg, "--out", str(tmp_path / "r")]) == 1  # warm start without a store
    assert main(["cycle", "--config", cfg, "--window", "a,b", "--out", str(tmp_path / "r")]) == 1


WRONG_GRID = """
import sys
from datetime import timedelta
from assimkit.grid import GridSpec, StateField
from assimkit.ogf import read_state, write_state
cur = read_state(sys.argv[2])
write_state(sys.argv[3], StateField.zeros(GridSpec.from_shape(4, 8), cur.registry, cur.valid_time + timedelta(hours=6)))
"""


def test_contract_violation_exit_code(tmp_path):
    script = tmp_path / "fc.py"
    script.write_text(textwrap.dedent(WRONG_GRID))
    cfg = _write_config(tmp_path / "c.json", {
        "grid.n_lat": 8, "grid.n_lon": 16, "cycle.start": "cold", "cycle.steps": 2,
        "operators.forecaster": f"{sys.executable} {script}",
    })
    assert main(["cycle", "--config", cfg, "--out", str(tmp_path / "r")]) == 2


def test_select_channels_cli(tmp_path):
    out = tmp_path / "channels.csv"
    fixture = tmp_path / "jac.csv"
    assert main(["select-channels", "--write-fixture", str(fixture), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 38
    out2 = tmp_path / "again.csv"
    assert main(["select-channels", "--jacobians", str(fixture), "--out", str(out2)]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_tracks_cli(tmp_path):
    best = tmp_path / "best.csv"
    fc = tmp_path / "fc.csv"
    best.write_text("storm_id,time,lat,lon\nA,2022-01-01T00:00:00,0,0\nA,2022-01-02T00:00:00,0,1\n")
    fc.write_text("storm_id,time,lat,lon\nA,2022-01-01T00:00:00,0,0\nA,2022-01-02T00:00:00,0,2\n")
    out = tmp_path / "err.csv"
    assert main(["tracks", "--forecast", str(fc), "--best", str(best), "--leads", "24,48", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1].startswith("A,24,111.19")
    assert lines[2] == "A,48,nan"
