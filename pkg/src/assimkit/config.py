"""Run configuration: one JSON object with flat dotted keys over fixed defaults."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

log = logging.getLogger("assimkit")

DATA_ROOT_ENV = "ASSIMKIT_DATA_ROOT"

# observation windows are [start, end) hour offsets from the analysis time
DEFAULTS = {
    "grid.n_lat": 720,
    "grid.n_lon": 1440,
    "window.satellite": [-3, 5],
    "window.gnss_ro": [-3, 5],
    "window.land_station": [-3, 5],
    "window.marine": [-3, 5],
    "window.radiosonde": [-3, 3],
    "qc.gross_min": 50.0,
    "qc.gross_max": 350.0,
    "qc.z_threshold_bt": 6.0,
    "qc.z_threshold_other": 4.0,
    "qc.zone_edges": [30.0, 60.0],
    "qc.censor": 7.5,
    "qc.min_samples": 3,
    "dilation.radius": 10,
    "dilation.epsilon": 1e-4,
    "cycle.dt_hours": 6,
    "cycle.unroll_steps": 4,
    "cycle.spin_up_days": 10,
    "cycle.forecast_steps": 40,
    "cycle.warm_start_leads": [1, 30],
    "cycle.steps": 40,
    "cycle.start": "warm",
    "operators.assimilator": "reference",
    "operators.forecaster": "reference",
    "operators.gamma": 0.5,
    "operators.damping": 0.0,
    "operators.shift": 1,
    "simulate.stations": 400,
    "simulate.radiosondes": 60,
    "simulate.ro_profiles": 40,
    "simulate.swath_pixels": 600,
    "simulate.outlier_fraction": 0.02,
    "simulate.start": "2022-01-01T00:00:00",
    "channels.increment": 20.0,
    "channels.floor": 20.0,
    "channels.target_co2": 21,
    "channels.target_h2o": 16,
    "channels.target_window": 1,
    "seed": 0,
    "threads": 1,
    "paths.data_root": "",
}


class ConfigError(ValueError):
    pass


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}")
        default = DEFAULTS[key]
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)) or len(value) != len(default):
                raise ConfigError(f"{key} needs {len(default)} values")
            value = [type(d)(x) for d, x in zip(default, value)]
        elif isinstance(default, bool) or default is None:
            pass
        elif isinstance(default, (int, float, str)):
            try:
                value = type(default)(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        self.values[key] = value

    def __getitem__(self, key):
        return self.values[key]

    def deviations(self) -> dict:
        return {k: v for k, v in self.values.items() if v != DEFAULTS[k]}

    def data_root(self) -> Path:
        root = self["paths.data_root"] or os.environ.get(DATA_ROOT_ENV, "")
        return Path(root) if root else Path.cwd()

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.data_root() / p

    def window_hours(self, category: str) -> int:
        a, b = self[f"window.{category}"]
        return b - a

    def to_json(self) -> str:
        return json.dumps(self.values, indent=1, sort_keys=True)

    def echo_deviations(self):
        for k, v in sorted(self.deviations().items()):
            log.info("config deviation: %s = %r (default %r)", k, v, DEFAULTS[k])


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(values)
