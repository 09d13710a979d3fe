"""Assimilation-forecast cycling with pluggable operators.

An assimilation operator maps ``(background, observations) -> analysis`` at
the background's valid time. A forecast operator maps two consecutive
states ``(x(t - dt), x(t)) -> x(t + dt)``. Operators are plain callables;
:class:`SubprocessAssimilator` and :class:`SubprocessForecaster` drive an
external program that exchanges OGF1 files instead.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .grid import NonFiniteStateError, RegistryMismatchError, StateField
from .observations import GriddedObsTensor, collapse_window


STORE_TIME_FORMAT = "%Y%m%dT%H%M"


class ContractViolation(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class DivergenceError(RuntimeError):
    def __init__(self, step: int, message: str = "operator produced non-finite values"):
        super().__init__(f"step {step}: {message}")
        self.step = step


class NoDataError(LookupError):
    pass


class AssimilationOperator(Protocol):
    def __call__(self, background: StateField, obs: GriddedObsTensor | None) -> StateField: ...


class ForecastOperator(Protocol):
    def __call__(self, previous: StateField, current: StateField) -> StateField: ...


@dataclass(frozen=True)
class CycleConfig:
    dt_hours: int = 6
    unroll_steps: int = 4
    spin_up_days: int = 10
    forecast_steps: int = 40
    warm_start_leads: tuple[int, int] = (1, 30)

    def __post_init__(self):
        if self.dt_hours <= 0:
            raise ValueError("dt must be positive")
        if self.unroll_steps < 1 or self.forecast_steps < 1:
            raise ValueError("unroll and forecast steps must be >= 1")
        lo, hi = self.warm_start_leads
        if not 1 <= lo <= hi:
            raise ValueError("warm-start lead range must satisfy 1 <= lo <= hi")

    @property
    def dt(self) -> timedelta:
        return timedelta(hours=self.dt_hours)

    @property
    def spin_up_cycles(self) -> int:
        return self.spin_up_days * 24 // self.dt_hours


@dataclass(frozen=True)
class CycleState:
    """Analyses at t - dt and t, plus the background valid at t + dt (computed if omitted)."""

    previous_analysis: StateField
    analysis: StateField
    background: StateField | None = None


@dataclass(frozen=True)
class CycleStep:
    step: int
    analysis: StateField
    background: StateField


def _check(step: int, out, ref: StateField, valid_time: datetime, what: str) -> StateField:
    if not isinstance(out, StateField):
        raise ContractViolation(step, f"{what} returned {type(out).__name__}, not a StateField")
    if not out.same_layout(ref):
        raise ContractViolation(step, f"{what} output is on a different grid or registry")
    if out.valid_time != valid_time:
        raise ContractViolation(step, f"{what} output valid at {out.valid_time}, expected {valid_time}")
    return out


def _call(step: int, fn, *args):
    try:
        out = fn(*args)
    except NonFiniteStateError as exc:
        raise DivergenceError(step, str(exc)) from exc
    except RegistryMismatchError as exc:
        raise ContractViolation(step, str(exc)) from exc
    if isinstance(out, StateField) and not np.all(np.isfinite(out.data)):
        raise DivergenceError(step)
    return out


def _obs_for(obs_stream, t: datetime):
    if obs_stream is None:
        return None
    if callable(obs_stream):
        return obs_stream(t)
    if isinstance(obs_stream, Mapping):
        return obs_stream.get(t)
    raise TypeError("obs_stream must be a callable or a mapping keyed by valid time")


def run_cycle(assimilate: AssimilationOperator, forecast: ForecastOperator, init: CycleState, obs_stream, steps: int, dt: timedelta = timedelta(hours=6), on_step: Callable[[CycleStep], None] | None = None) -> list[CycleStep]:
    """Alternate assimilation and forecasting for ``steps`` cycles.

    Step n assimilates the observations valid at the current background time
    into that background, then forecasts the next background from the last
    two analyses. Returns one (analysis, background) pair per step.
    """
    prev, cur = init.previous_analysis, init.analysis
    if cur.valid_time - prev.valid_time != dt:
        raise ContractViolation(0, "initial analyses are not one step apart")
    bg = init.background
    if bg is None:
        bg = _check(0, _call(0, forecast, prev, cur), cur, cur.valid_time + dt, "forecast")
    elif bg.valid_time != cur.valid_time + dt:
        raise ContractViolation(0, "initial background is not valid one step after the analysis")
    out = []
    for n in range(1, steps + 1):
        y = _obs_for(obs_stream, bg.valid_time)
        ana = _check(n, _call(n, assimilate, bg, y), bg, bg.valid_time, "assimilation")
        nxt = _check(n, _call(n, forecast, cur, ana), ana, ana.valid_time + dt, "forecast")
        rec = CycleStep(n, ana, nxt)
        out.append(rec)
        if on_step is not None:
            on_step(rec)
        prev, cur, bg = cur, ana, nxt
    return out


def autoregressive_forecast(forecast: ForecastOperator, x_prev: StateField, x_cur: StateField, steps: int = 40, dt: timedelta = timedelta(hours=6)) -> list[StateField]:
    """Roll the forecast operator forward, feeding each output back as the newest state."""
    if x_cur.valid_time - x_prev.valid_time != dt:
        raise ContractViolation(0, "initial states are not one step apart")
    out = []
    a, b = x_prev, x_cur
    for k in range(1, steps + 1):
        c = _check(k, _call(k, forecast, a, b), b, b.valid_time + dt, "forecast")
        out.append(c)
        a, b = b, c
    return out


class OfflineForecastStore:
    """Pre-generated forecasts keyed by (init time, lead step)."""

    def __init__(self, dt: timedelta = timedelta(hours=6)):
        self.dt = dt
        self._items: dict[tuple[datetime, int], StateField] = {}
        self._layout = None

    def add(self, init_time: datetime, lead: int, field: StateField):
        if field.valid_time != init_time + lead * self.dt:
            raise ValueError("forecast valid time does not match init + lead * dt")
        if self._layout is None:
            self._layout = field
        elif not field.same_layout(self._layout):
            raise ValueError("forecast layout differs from the store's")
        self._items[(init_time, lead)] = field

    def __len__(self):
        return len(self._items)

    def candidates(self, valid_time: datetime, leads: tuple[int, int] = (1, 30)) -> list[tuple[datetime, int]]:
        lo, hi = leads
        return sorted(k for k, f in self._items.items() if f.valid_time == valid_time and lo <= k[1] <= hi)

    def get(self, init_time: datetime, lead: int) -> StateField:
        return self._items[(init_time, lead)]

    @classmethod
    def from_directory(cls, path, dt: timedelta = timedelta(hours=6)) -> "OfflineForecastStore":
        """Load ``<init YYYYmmddTHHMM>_<lead>.ogf`` files."""
        from .ogf import read_state

        store = cls(dt)
        for f in sorted(Path(path).glob("*.ogf")):
            init, lead = f.stem.rsplit("_", 1)
            store.add(datetime.strptime(init, STORE_TIME_FORMAT), int(lead), read_state(f))
        return store


def warm_start_sample(store: OfflineForecastStore, valid_time: datetime, rng_seed: int, leads: tuple[int, int] = (1, 30)) -> StateField:
    """Uniform draw among stored forecasts valid at ``valid_time`` with lead in ``leads``."""
    cands = store.candidates(valid_time, leads)
    if not cands:
        raise NoDataError(f"no stored forecast valid at {valid_time}")
    k = int(np.random.default_rng(rng_seed).integers(len(cands)))
    return store.get(*cands[k])


def cold_start(template: StateField, valid_time: datetime) -> StateField:
    return StateField.zeros(template.grid, template.registry, valid_time, "analysis", template.data.dtype)


def reference_relaxation_assimilator(gamma: float) -> AssimilationOperator:
    """x_a = x_b + gamma * m * (y - x_b), observations in the state's channel layout.

    ``obs`` may be a (values, mask) pair or a GriddedObsTensor. A tensor's
    window is collapsed to the latest observation per cell and ``m`` is its
    confidence, which equals the mask unless the tensor was dilated.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")

    def assimilate(background: StateField, obs) -> StateField:
        if obs is None:
            return background.replace(kind="analysis")
        xb = background.data.astype(np.float64)
        if isinstance(obs, GriddedObsTensor):
            y, seen, conf = collapse_window(obs)
            m = seen * conf
        else:
            y, m = (np.asarray(a, dtype=np.float64) for a in obs)
            m = (m > 0).astype(np.float64)
        if y.shape != xb.shape:
            raise RegistryMismatchError(f"observation layout {y.shape} does not match state {xb.shape}")
        # (1 - g m) x_b + g m y: equal to x_b + g m (y - x_b), and exact at g m in {0, 1}
        gm = gamma * m
        xa = (1.0 - gm) * xb + gm * np.where(m > 0, y, 0.0)
        return background.replace(data=xa.astype(background.data.dtype), kind="analysis")

    return assimilate


def reference_advection_forecaster(damping: float = 0.0, shift: int = 0, dt: timedelta = timedelta(hours=6)) -> ForecastOperator:
    """Toy dynamics: roll anomalies ``shift`` cells east and shrink them by (1 - damping).

    Anomalies are taken about each channel's grid mean, which is conserved.
    """
    if not 0.0 <= damping <= 1.0:
        raise ValueError("damping must be in [0, 1]")
    shift = int(shift)

    def forecast(previous: StateField, current: StateField) -> StateField:
        x = current.data.astype(np.float64)
        mean = x.mean(axis=(-2, -1), keepdims=True)
        # mean + (1 - d) (roll(x) - mean), written so that d = 0 is an exact roll
        out = (1.0 - damping) * np.roll(x, shift, axis=-1) + damping * mean
        return current.replace(data=out.astype(current.data.dtype), valid_time=current.valid_time + dt, kind="background")

    return forecast


def scalar_linear_forecaster(factor: float, dt: timedelta = timedelta(hours=6)) -> ForecastOperator:
    """x(t + dt) = factor * x(t)."""

    def forecast(previous: StateField, current: StateField) -> StateField:
        return current.replace(data=factor * current.data, valid_time=current.valid_time + dt, kind="background")

    return forecast


class _SubprocessOperator:
    def __init__(self, command: str | Sequence[str], timeout: float | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout

    def _run(self, args: list[str]):
        proc = subprocess.run(self.command + args, capture_output=True, text=True, timeout=self.timeout)
        if proc.returncode != 0:
            raise RuntimeError(f"operator {self.command[0]} exited {proc.returncode}: {proc.stderr.strip()}")


class SubprocessForecaster(_SubprocessOperator):
    """Runs ``command PREV.ogf CUR.ogf OUT.ogf`` and reads OUT.ogf back."""

    def __call__(self, previous: StateField, current: StateField) -> StateField:
        from .ogf import read_state, write_state

        with tempfile.TemporaryDirectory() as d:
            p, c, o = (str(Path(d) / n) for n in ("prev.ogf", "cur.ogf", "out.ogf"))
            write_state(p, previous)
            write_state(c, current)
            self._run([p, c, o])
            return read_state(o)


class SubprocessAssimilator(_SubprocessOperator):
    """Runs ``command BACKGROUND.ogf OBS.ogf OUT.ogf``; OBS.ogf is omitted ("-") when there are no observations."""

    def __call__(self, background: StateField, obs: GriddedObsTensor | None) -> StateField:
        from .ogf import read_state, write_obs_tensor, write_state

        with tempfile.TemporaryDirectory() as d:
            b, y, o = (str(Path(d) / n) for n in ("bg.ogf", "obs.ogf", "out.ogf"))
            write_state(b, background)
            if obs is None:
                y = "-"
            else:
                write_obs_tensor(y, obs, background.grid)
            self._run([b, y, o])
            return read_state(o)
