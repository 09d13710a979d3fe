"""Command-line entry point: simulate, encode, qc, dilate, cycle, verify, tracks, select-channels.

Exit codes: 0 success, 1 data error, 2 contract violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
import zlib
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import channel_select as cs
from . import synthetic
from .config import ConfigError, RunConfig, load_config
from .cycling import (
    STORE_TIME_FORMAT,
    ContractViolation,
    CycleState,
    DivergenceError,
    NoDataError as CycleNoData,
    OfflineForecastStore,
    SubprocessAssimilator,
    SubprocessForecaster,
    autoregressive_forecast,
    cold_start,
    reference_advection_forecaster,
    reference_relaxation_assimilator,
    run_cycle,
    warm_start_sample,
)
from .dilation import build_kernel, dilate_tensor
from .forward import DomainError
from .grid import GridSpec, InvalidGridError, RegistryMismatchError, StateField, latitude_weights, make_channel_registry
from .losses import default_obs_weights, obs_loss, state_loss
from .metrics import NOT_A_SCORE, NoDataError, departure_scores, field_scorecard, gnss_departures, insitu_departures, read_tracks, track_error, write_scorecard
from .observations import (
    LayoutError,
    WindowError,
    append_platform_metadata,
    collapse_window,
    convert_radiosonde_records,
    encode_time_embedding,
    hourly_frames_points,
    load_stats,
    normalize_channels,
    project_swath,
    resolve_overlaps,
    stack_temporal,
)
from .ogf import FormatError, read_obs_tensor, read_state, write_obs_tensor, write_state
from .qc import QcConfig, QcReport, screen_brightness_temperatures, zoned_screen
from .records import PointObs, ProfileObs, RecordError, SwathObs, read_records, write_records

log = logging.getLogger("assimkit")

EXIT_OK, EXIT_DATA, EXIT_CONTRACT = 0, 1, 2
DATA_ERRORS = (ConfigError, FileNotFoundError, FormatError, RecordError, WindowError, NoDataError, CycleNoData, DomainError, InvalidGridError, json.JSONDecodeError)
CONTRACT_ERRORS = (ContractViolation, DivergenceError, RegistryMismatchError, LayoutError)


class DataError(RuntimeError):
    pass


def stamp(t: datetime) -> str:
    return t.strftime(STORE_TIME_FORMAT)


def parse_stamp(s: str) -> datetime:
    try:
        return datetime.strptime(s, STORE_TIME_FORMAT)
    except ValueError:
        raise DataError(f"{s!r} is not a {STORE_TIME_FORMAT} cycle time") from None


def _grid(cfg: RunConfig) -> GridSpec:
    return GridSpec.from_shape(cfg["grid.n_lat"], cfg["grid.n_lon"])


def _registry():
    return make_channel_registry(include_precip=False)


def _pmap(fn, items, threads: int):
    """Map over items, in order; threads only change wall time."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _qc_config(cfg: RunConfig) -> QcConfig:
    return QcConfig(
        cfg["qc.gross_min"], cfg["qc.gross_max"], cfg["qc.z_threshold_bt"], cfg["qc.z_threshold_other"],
        tuple(cfg["qc.zone_edges"]), cfg["qc.censor"], cfg["qc.min_samples"],
    )


def _seed_for(cfg: RunConfig, name: str) -> int:
    return (int(cfg["seed"]) * 1_000_003 + zlib.crc32(name.encode())) % 2**32


def _windows(cfg: RunConfig) -> dict:
    return {c: tuple(cfg[f"window.{c}"]) for c in ("satellite", "gnss_ro", "land_station", "marine", "radiosonde")}


# ---------------------------------------------------------------- simulate


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    grid, reg = _grid(cfg), _registry()
    start = datetime.fromisoformat(cfg["simulate.start"])
    dt = int(cfg["cycle.dt_hours"])
    shift, seed = int(cfg["operators.shift"]), int(cfg["seed"])
    steps, fsteps = int(cfg["cycle.steps"]), int(cfg["cycle.forecast_steps"])
    for d in ("truth", "obs", "store"):
        (out / d).mkdir(parents=True, exist_ok=True)
    truth = lambda k: synthetic.truth_at(grid, reg, start, k, shift, seed, dt)
    for k in range(-1, steps + fsteps + 1):
        x = truth(k)
        write_state(out / "truth" / f"truth_{stamp(x.valid_time)}.ogf", x)
    write_state(out / "climatology.ogf", synthetic.climatology(grid, reg, start))
    windows = _windows(cfg)
    for k in range(1, steps + 1):
        x = truth(k)
        rng = np.random.default_rng(_seed_for(cfg, f"obs{k}"))
        recs = synthetic.simulate_observations(
            x, rng, windows, int(cfg["simulate.stations"]), int(cfg["simulate.radiosondes"]),
            int(cfg["simulate.ro_profiles"]), int(cfg["simulate.swath_pixels"]), float(cfg["simulate.outlier_fraction"]),
        )
        write_records(out / "obs" / f"{stamp(x.valid_time)}.jsonl", recs)
    lo, hi = cfg["cycle.warm_start_leads"]
    for k in (-1, 0):
        for lead in range(lo, min(hi, args.store_leads) + 1):
            init = truth(k - lead)
            f = synthetic.damped_forecast(init, lead, shift, args.store_damping, dt)
            write_state(out / "store" / f"{stamp(init.valid_time)}_{lead}.ogf", f)
    log.info("simulated %d cycles on a %dx%d grid into %s", steps, grid.n_lat, grid.n_lon, out)
    return EXIT_OK


# ---------------------------------------------------------------- encode


def _encode_file(cfg: RunConfig, path: Path, out_dir: Path, stats) -> dict:
    grid, reg = _grid(cfg), _registry()
    t0 = parse_stamp(path.stem)
    records, errors = read_records(path)
    windows = _windows(cfg)
    rep = {"records": len(records), "parse_errors": errors, "outputs": []}

    # points: one temporal stack on the widest point window, in state channel layout
    points = convert_radiosonde_records([r for r in records if isinstance(r, PointObs)])
    keep, outside = [], 0
    for r in points:
        a, b = windows[r.source]
        if t0 + timedelta(hours=a) <= r.time < t0 + timedelta(hours=b):
            keep.append(r)
        else:
            outside += 1
    a = min(windows[c][0] for c in ("land_station", "marine", "radiosonde"))
    b = max(windows[c][1] for c in ("land_station", "marine", "radiosonde"))
    ws = t0 + timedelta(hours=a)
    frames = hourly_frames_points(keep, [c.key for c in reg], grid, ws, b - a)
    tensor = stack_temporal(frames, ws, b - a)
    tensor.meta.update(cycle_time=t0.isoformat(), outside_window=outside)
    if stats is not None:
        names, mean, std = stats
        if list(names) != list(tensor.channels):
            raise LayoutError("normalisation statistics do not match the point channel layout")
        tensor = normalize_channels(tensor, mean, std)
    rep["points"] = len(points)
    rep["rejected"] = sum(len(f.rejected) for f in frames) + outside
    rep["collisions"] = tensor.meta["collisions"]
    target = out_dir / f"{path.stem}.ogf"
    write_obs_tensor(target, tensor, grid)
    rep["outputs"].append(target.name)

    profiles = [r for r in records if isinstance(r, ProfileObs) and r.kind == "gnss_ro_refractivity"]
    a, b = windows["gnss_ro"]
    inside = [p for p in profiles if t0 + timedelta(hours=a) <= p.time < t0 + timedelta(hours=b)]
    ro = encode_time_embedding(inside, t0 + timedelta(hours=a), b - a, grid, rng_seed=_seed_for(cfg, path.stem + "ro"))
    rep["ro_profiles"] = len(profiles)
    rep["ro_collisions"] = ro.meta["collisions"]
    target = out_dir / f"{path.stem}_ro.ogf"
    write_obs_tensor(target, ro, grid)
    rep["outputs"].append(target.name)

    swaths = defaultdict(list)
    for r in records:
        if isinstance(r, SwathObs):
            swaths[r.instrument].append(r)
    a, b = windows["satellite"]
    for inst in sorted(swaths):
        platforms = sorted({s.platform for s in swaths[inst]})
        frames = []
        for h in range(b - a):
            fs = t0 + timedelta(hours=a + h)
            per = {}
            for pi, name in enumerate(platforms):
                parts = [s for s in swaths[inst] if s.platform == name]
                merged = SwathObs(
                    np.concatenate([s.lat for s in parts]), np.concatenate([s.lon for s in parts]),
                    np.concatenate([s.time for s in parts]), np.concatenate([s.bt for s in parts]),
                    np.concatenate([s.zenith for s in parts]), inst, name,
                )
                fr, zen = project_swath(merged, grid, fs)
                per[name] = append_platform_metadata(fr, zen, pi, len(platforms), platforms)
            frames.append(resolve_overlaps(per, _seed_for(cfg, f"{path.stem}{inst}{h}")))
        sw = stack_temporal(frames, t0 + timedelta(hours=a), b - a)
        target = out_dir / f"{path.stem}_{inst}.ogf"
        write_obs_tensor(target, sw, grid)
        rep["outputs"].append(target.name)
        rep[f"{inst}_collisions"] = sw.meta["collisions"]
    return rep


def cmd_encode(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = sorted(cfg.resolve(p) for p in args.inputs)
    if not inputs:
        log.warning("no input files; nothing encoded")
    stats = load_stats(args.stats) if args.stats else None
    reports = _pmap(lambda p: _encode_file(cfg, p, out_dir, stats), inputs, int(cfg["threads"]))
    report = {p.name: r for p, r in zip(inputs, reports)}
    with open(out_dir / "encode_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    bad = sum(len(r["parse_errors"]) for r in reports)
    for p, r in zip(inputs, reports):
        for e in r["parse_errors"]:
            log.error("%s", e)
        if r["records"] == 0:
            log.warning("%s: no records; wrote empty tensors", p.name)
    return EXIT_DATA if bad else EXIT_OK


# ---------------------------------------------------------------- qc


def _qc_file(cfg: RunConfig, path: Path, out_dir: Path, report: QcReport) -> tuple[int, int, list[str]]:
    qcc = _qc_config(cfg)
    records, errors = read_records(path)
    points = [r for r in records if isinstance(r, PointObs)]
    keep_point = np.ones(len(points), dtype=bool)
    groups = defaultdict(list)
    for k, r in enumerate(points):
        groups[(r.variable, r.level)].append(k)
    for (var, lev), idx in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] if kv[0][1] is not None else -1)):
        lats = [points[k].lat for k in idx]
        vals = [points[k].value for k in idx]
        label = f"{path.stem}:{var}" + ("" if lev is None else f"@{lev}")
        keep_point[idx] = zoned_screen(lats, vals, False, qcc, label, report)
    kept, dropped = [], 0
    pi = 0
    for r in records:
        if isinstance(r, PointObs):
            ok = keep_point[pi]
            pi += 1
            if ok:
                kept.append(r)
            else:
                dropped += 1
        elif isinstance(r, SwathObs):
            keep = screen_brightness_temperatures(r.lat, r.bt, qcc, f"{path.stem}:{r.instrument}:{r.platform}", report).all(axis=1)
            dropped += int((~keep).sum())
            if keep.any():
                kept.append(SwathObs(r.lat[keep], r.lon[keep], r.time[keep], r.bt[keep], r.zenith[keep], r.instrument, r.platform))
        else:
            kept.append(r)
    write_records(out_dir / path.name, kept)
    return len(records), dropped, errors


def cmd_qc(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = QcReport()
    errors = []
    for p in sorted(cfg.resolve(x) for x in args.inputs):
        n, dropped, errs = _qc_file(cfg, p, out_dir, report)
        errors += errs
        log.info("%s: %d records, %d observations rejected", p.name, n, dropped)
    report.write(out_dir / "qc_report.csv")
    for e in errors:
        log.error("%s", e)
    if report.flagged:
        log.warning("qc: %d stream/zone groups had too few samples and were kept unscreened (see qc_report.csv)", len(report.flagged))
    return EXIT_DATA if errors else EXIT_OK


# ---------------------------------------------------------------- dilate


def cmd_dilate(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kernel = build_kernel(int(cfg["dilation.radius"]))
    eps = float(cfg["dilation.epsilon"])
    inputs = sorted(cfg.resolve(p) for p in args.inputs)

    def one(p):
        from .ogf import grid_from_header

        t = read_obs_tensor(p)
        write_obs_tensor(out_dir / p.name, dilate_tensor(t, kernel, eps), grid_from_header(p))

    _pmap(one, inputs, int(cfg["threads"]))
    log.info("dilated %d tensors with radius %d", len(inputs), kernel.radius)
    return EXIT_OK


# ---------------------------------------------------------------- cycle


def _operators(cfg: RunConfig):
    dt = timedelta(hours=int(cfg["cycle.dt_hours"]))
    a, f = cfg["operators.assimilator"], cfg["operators.forecaster"]
    assim = reference_relaxation_assimilator(float(cfg["operators.gamma"])) if a == "reference" else SubprocessAssimilator(a)
    fc = reference_advection_forecaster(float(cfg["operators.damping"]), int(cfg["operators.shift"]), dt) if f == "reference" else SubprocessForecaster(f)
    return assim, fc


def _truth_index(path) -> dict:
    if path is None:
        return {}
    out = {}
    for f in sorted(Path(path).glob("*.ogf")):
        x = read_state(f)
        out[x.valid_time] = x
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_cycle(cfg: RunConfig, args) -> int:
    out = Path(args.out)
    (out / "forecast").mkdir(parents=True, exist_ok=True)
    dt = timedelta(hours=int(cfg["cycle.dt_hours"]))
    t0 = datetime.fromisoformat(args.start or cfg["simulate.start"])
    seed = int(cfg["seed"])
    leads = tuple(cfg["cycle.warm_start_leads"])
    if cfg["cycle.start"] == "warm":
        if not args.store:
            raise DataError("warm start needs --store (or set cycle.start to cold)")
        store = OfflineForecastStore.from_directory(cfg.resolve(args.store), dt)
        prev = warm_start_sample(store, t0 - dt, seed, leads).replace(kind="analysis")
        cur = warm_start_sample(store, t0, seed + 1, leads).replace(kind="analysis")
    elif cfg["cycle.start"] == "cold":
        template = StateField.zeros(_grid(cfg), _registry(), t0)
        prev, cur = cold_start(template, t0 - dt), cold_start(template, t0)
    else:
        raise ConfigError(f"cycle.start must be warm or cold, not {cfg['cycle.start']!r}")

    obs_dir = cfg.resolve(args.obs_dir) if args.obs_dir else None

    def obs_stream(t):
        if obs_dir is None:
            return None
        p = obs_dir / f"{stamp(t)}.ogf"
        return read_obs_tensor(p) if p.exists() else None

    truths = _truth_index(cfg.resolve(args.truth_dir) if args.truth_dir else None)
    w = latitude_weights(cur.grid)
    lam = default_obs_weights(cur.registry)
    assim, fc = _operators(cfg)
    rows, timing = [], []
    clock = [time.perf_counter()]

    def on_step(s):
        ta = s.analysis.valid_time
        write_state(out / f"analysis_{stamp(ta)}.ogf", s.analysis)
        write_state(out / f"background_{stamp(s.background.valid_time)}.ogf", s.background)
        y = obs_stream(ta)
        row = {"step": s.step, "valid_time": ta.isoformat()}
        row["analysis_loss"] = state_loss(s.analysis, truths[ta], w) if ta in truths else NOT_A_SCORE
        tb = s.background.valid_time
        row["background_loss"] = state_loss(s.background, truths[tb], w) if tb in truths else NOT_A_SCORE
        if y is not None:
            v, seen, _ = collapse_window(y)
            row["obs_loss"] = obs_loss(s.analysis, (v, seen), lam, w)
            row["n_obs"] = int(seen.sum())
        else:
            row["obs_loss"], row["n_obs"] = NOT_A_SCORE, 0
        rows.append(row)
        now = time.perf_counter()
        timing.append({"step": s.step, "wall_seconds": f"{now - clock[0]:.4f}"})
        clock[0] = now

    traj = run_cycle(assim, fc, CycleState(prev, cur), obs_stream, int(cfg["cycle.steps"]), dt, on_step)
    last_prev = traj[-2].analysis if len(traj) > 1 else cur
    fcs = autoregressive_forecast(fc, last_prev, traj[-1].analysis, int(cfg["cycle.forecast_steps"]), dt)
    for k, f in enumerate(fcs, 1):
        write_state(out / "forecast" / f"forecast_{k:03d}.ogf", f.replace(kind="forecast"), extra={"lead": k, "init": traj[-1].analysis.valid_time.isoformat()})

    cols = ["step", "valid_time", "analysis_loss", "background_loss", "obs_loss", "n_obs"]
    with open(out / "cycle_log.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([f"{r[c]:.10g}" if isinstance(r[c], float) else r[c] for c in cols])
    with open(out / "cycle_timing.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, ["step", "wall_seconds"], lineterminator="\n")
        wr.writeheader()
        wr.writerows(timing)
    files = sorted(out.glob("*.ogf")) + sorted((out / "forecast").glob("*.ogf"))
    with open(out / "trajectory.sha256", "w", encoding="utf-8") as fh:
        for f in files:
            fh.write(f"{_sha256(f)}  {f.relative_to(out)}\n")
    with open(out / "run_config.json", "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json() + "\n")
    log.info("cycled %d steps, forecast %d leads into %s", len(traj), len(fcs), out)
    return EXIT_OK


# ---------------------------------------------------------------- verify


def cmd_verify(cfg: RunConfig, args) -> int:
    run = Path(args.run_dir)
    dt = timedelta(hours=int(cfg["cycle.dt_hours"]))
    truths = _truth_index(cfg.resolve(args.truth_dir))
    clim = read_state(cfg.resolve(args.climatology)) if args.climatology else None
    analyses = sorted(run.glob("analysis_*.ogf"))
    if not analyses:
        raise DataError(f"no analyses in {run}")
    ana = read_state(analyses[-1])
    w = latitude_weights(ana.grid)
    rows = []

    def score(field, lead):
        truth = truths.get(field.valid_time) if field is not None else None
        if truth is None:
            for ch in ana.registry:
                lev = "" if ch.level is None else ch.level
                for sc in ("wrmse", "acc") if clim is not None else ("wrmse",):
                    rows.append({"variable": ch.name, "level": lev, "lead": lead, "score": sc, "value": NOT_A_SCORE, "n": 0})
            return
        c = clim.replace(valid_time=truth.valid_time) if clim is not None else None
        rows.extend(field_scorecard(field, truth, w, lead, c))

    score(ana, 0)
    nsteps = int(args.leads or cfg["cycle.forecast_steps"])
    for k in range(1, nsteps + 1):
        p = run / "forecast" / f"forecast_{k:03d}.ogf"
        f = read_state(p) if p.exists() else None
        if f is not None and f.valid_time != ana.valid_time + k * dt:
            raise DataError(f"{p.name} valid at {f.valid_time}, expected {ana.valid_time + k * dt}")
        score(f, k * int(cfg["cycle.dt_hours"]))

    if args.obs_dir:
        p = cfg.resolve(args.obs_dir) / f"{stamp(ana.valid_time)}.jsonl"
        recs, _ = read_records(p) if p.exists() else ([], [])
        pts = convert_radiosonde_records([r for r in recs if isinstance(r, PointObs)])
        ro = [r for r in recs if isinstance(r, ProfileObs)]
        for name, d in (("insitu", insitu_departures(ana, pts)), ("gnss_ro", gnss_departures(ana, ro))):
            try:
                s = departure_scores(d)
            except NoDataError:
                s = {"rmse": NOT_A_SCORE, "mbe": NOT_A_SCORE, "std": NOT_A_SCORE, "n": 0}
            for k in ("rmse", "mbe", "std"):
                rows.append({"variable": name, "level": "", "lead": 0, "score": k, "value": s[k], "n": s["n"]})

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scorecard(out, rows)
    log.info("scorecard with %d rows written to %s", len(rows), out)
    return EXIT_OK


# ---------------------------------------------------------------- tracks


def cmd_tracks(cfg: RunConfig, args) -> int:
    fc = read_tracks(cfg.resolve(args.forecast))
    best = read_tracks(cfg.resolve(args.best))
    leads = [float(x) for x in args.leads.split(",")]
    rows = []
    for sid in sorted(fc):
        for lead in leads:
            try:
                err = track_error(fc[sid], best[sid], lead) if sid in best else NOT_A_SCORE
            except NoDataError:
                err = NOT_A_SCORE
            rows.append((sid, lead, err))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["storm_id", "lead_hours", "error_km"])
        for sid, lead, e in rows:
            wr.writerow([sid, f"{lead:g}", "nan" if not np.isfinite(e) else f"{e:.6f}"])
        for lead in leads:
            v = [e for _, l, e in rows if l == lead and np.isfinite(e)]
            wr.writerow(["MEAN", f"{lead:g}", f"{np.mean(v):.6f}" if v else "nan"])
    return EXIT_OK


# ---------------------------------------------------------------- select-channels


def cmd_select_channels(cfg: RunConfig, args) -> int:
    if args.jacobians:
        chans = cs.read_jacobians(cfg.resolve(args.jacobians))
    else:
        sounding, window = cs.synthetic_fixture(int(cfg["seed"]))
        chans = sounding + window
        if args.write_fixture:
            cs.write_jacobians(args.write_fixture, chans)
    sounding = [c for c in chans if c.band != "window"]
    retained = cs.interval_sample(sounding, float(cfg["channels.increment"]), float(cfg["channels.floor"]))
    ids = {c.channel_id for c in retained}
    candidates = [c for c in chans if c.channel_id not in ids]
    targets = {"co2": int(cfg["channels.target_co2"]), "h2o": int(cfg["channels.target_h2o"]), "window": int(cfg["channels.target_window"])}
    res = cs.gap_fill(retained, candidates, targets)
    cs.write_channel_list(args.out, res.channels)
    log.info("interval sampling kept %s; final %s (%d channels)", cs.band_counts(retained), cs.band_counts(res.channels), len(res.channels))
    if res.partial:
        log.warning("candidates exhausted; short by %s", res.shortfall)
    return EXIT_OK


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of dotted configuration keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--radius", type=int, help="dilation influence radius in grid cells")
    common.add_argument("--epsilon", type=float, help="dilation denominator offset")
    common.add_argument("--window", help="observation window as START,END hours for every category")
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="assimkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="synthetic truth, observations and warm-start store")
    s.add_argument("--out", required=True)
    s.add_argument("--store-leads", type=int, default=4)
    s.add_argument("--store-damping", type=float, default=0.1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("encode", parents=[common], help="grid JSONL observations into OGF1 tensors")
    s.add_argument("inputs", nargs="*")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--stats", help="normalisation statistics sidecar for the point tensor")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("qc", parents=[common], help="gross and bi-weight screening of JSONL observations")
    s.add_argument("inputs", nargs="*")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_qc)

    s = sub.add_parser("dilate", parents=[common], help="Cressman-fill encoded tensors")
    s.add_argument("inputs", nargs="*")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_dilate)

    s = sub.add_parser("cycle", parents=[common], help="run assimilation-forecast cycles and a final forecast")
    s.add_argument("--out", required=True)
    s.add_argument("--obs-dir")
    s.add_argument("--store")
    s.add_argument("--truth-dir")
    s.add_argument("--start", help="ISO time of the first analysis (default simulate.start)")
    s.set_defaults(func=cmd_cycle)

    s = sub.add_parser("verify", parents=[common], help="score a cycle run against truth")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--truth-dir", required=True)
    s.add_argument("--climatology")
    s.add_argument("--obs-dir", help="JSONL observations for in-situ and RO departures of the last analysis")
    s.add_argument("--leads", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("tracks", parents=[common], help="tropical cyclone track errors")
    s.add_argument("--forecast", required=True)
    s.add_argument("--best", required=True)
    s.add_argument("--leads", default="24,48,72,96,120")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tracks)

    s = sub.add_parser("select-channels", parents=[common], help="thin sounder channels by Jacobian peak")
    s.add_argument("--jacobians")
    s.add_argument("--write-fixture")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select_channels)
    return p


def _overrides(args) -> dict:
    o = {"seed": args.seed, "dilation.radius": args.radius, "dilation.epsilon": args.epsilon, "threads": args.threads}
    if args.window:
        try:
            a, b = (int(x) for x in args.window.split(","))
        except ValueError:
            raise ConfigError(f"--window expects START,END hours, got {args.window!r}") from None
        for c in ("satellite", "gnss_ro", "land_station", "marine", "radiosonde"):
            o[f"window.{c}"] = [a, b]
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, _overrides(args))
        cfg.echo_deviations()
        return args.func(cfg, args)
    except CONTRACT_ERRORS as exc:
        log.error("contract violation: %s", exc)
        return EXIT_CONTRACT
    except DATA_ERRORS + (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
