"""End-to-end synthetic pipeline driven through the command-line entry point."""

import json
from pathlib import Path

from assimkit.cli import main

GOLDEN_CONFIG = {
    "grid.n_lat": 16,
    "grid.n_lon": 32,
    "dilation.radius": 3,
    "cycle.steps": 6,
    "cycle.forecast_steps": 6,
    "simulate.stations": 150,
    "simulate.radiosondes": 20,
    "simulate.ro_profiles": 10,
    "simulate.swath_pixels": 200,
}


def run_pipeline(work: Path, config: dict | None = None, seed: int = 0) -> dict:
    """simulate -> qc -> encode -> dilate -> cycle -> verify; returns exit codes and paths."""
    work = Path(work)
    work.mkdir(parents=True, exist_ok=True)
    cfg = work / "config.json"
    cfg.write_text(json.dumps(config or GOLDEN_CONFIG))
    common = ["--config", str(cfg), "--seed", str(seed)]
    sim, qc, enc, dil, run = (work / n for n in ("sim", "qc", "enc", "dil", "run"))
    rc = {}
    rc["simulate"] = main(["simulate", *common, "--out", str(sim)])
    rc["qc"] = main(["qc", *common, *map(str, sorted((sim / "obs").glob("*.jsonl"))), "--out-dir", str(qc)])
    rc["encode"] = main(["encode", *common, *map(str, sorted(qc.glob("*.jsonl"))), "--out-dir", str(enc)])
    states = sorted(p for p in enc.glob("*.ogf") if "_" not in p.stem)
    rc["dilate"] = main(["dilate", *common, *map(str, states), "--out-dir", str(dil)])
    rc["cycle"] = main(["cycle", *common, "--out", str(run), "--obs-dir", str(dil), "--store", str(sim / "store"), "--truth-dir", str(sim / "truth")])
    rc["verify"] = main([
        "verify", *common, "--run-dir", str(run), "--truth-dir", str(sim / "truth"),
        "--climatology", str(sim / "climatology.ogf"), "--obs-dir", str(sim / "obs"), "--out", str(work / "scorecard.csv"),
    ])
    return {"rc": rc, "scorecard": work / "scorecard.csv", "run": run, "sim": sim, "qc": qc, "enc": enc, "dil": dil}
