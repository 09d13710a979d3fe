"""Cycle a relaxation assimilator with a damped advection model from a cold start."""

from datetime import datetime, timedelta

import numpy as np

from assimkit import synthetic
from assimkit.cycling import CycleState, cold_start, reference_advection_forecaster, reference_relaxation_assimilator, run_cycle
from assimkit.grid import GridSpec, latitude_weights, make_channel_registry
from assimkit.losses import state_loss

grid, reg = GridSpec.from_shape(16, 32), make_channel_registry(False)
t0, dt = datetime(2022, 1, 1), timedelta(hours=6)
truth = {t0 + k * dt: synthetic.truth_at(grid, reg, t0, k, 1, seed=3) for k in range(0, 42)}
rng = np.random.default_rng(4)


def obs(t):
    x = truth[t].data
    m = (rng.random(x.shape) < 0.3).astype(float)
    return x + m * rng.normal(0, 0.01, x.shape), m


template = truth[t0]
init = CycleState(cold_start(template, t0 - dt), cold_start(template, t0))
traj = run_cycle(reference_relaxation_assimilator(0.5), reference_advection_forecaster(0.0, 1), init, obs, 40)
w = latitude_weights(grid)
for s in traj[::5] + [traj[-1]]:
    print(f"step {s.step:2d}  {s.analysis.valid_time:%Y-%m-%d %H}Z  analysis loss {state_loss(s.analysis, truth[s.analysis.valid_time], w):.4g}")
