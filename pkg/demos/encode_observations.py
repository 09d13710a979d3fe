"""Simulate one cycle of observations, screen them and grid them into tensors."""

from datetime import datetime

import numpy as np

from assimkit import synthetic
from assimkit.grid import GridSpec, make_channel_registry
from assimkit.observations import convert_radiosonde_records, encode_time_embedding, hourly_frames_points, stack_temporal
from assimkit.qc import screen_brightness_temperatures, zoned_screen
from assimkit.records import PointObs, ProfileObs, SwathObs

grid, reg = GridSpec.from_shape(32, 64), make_channel_registry(False)
t0 = datetime(2022, 1, 1, 6)
truth = synthetic.truth_at(grid, reg, t0, 0, 1, seed=0)
windows = {"satellite": (-3, 5), "gnss_ro": (-3, 5), "land_station": (-3, 5), "marine": (-3, 5), "radiosonde": (-3, 3)}
recs = synthetic.simulate_observations(truth, np.random.default_rng(1), windows, 400, 40, 30, 500, 0.02)

points = [r for r in recs if isinstance(r, PointObs)]
t2m = [r for r in points if r.variable == "T2m"]
keep = zoned_screen([r.lat for r in t2m], [r.value for r in t2m], False)
print(f"T2m reports: {len(t2m)}, rejected by bi-weight screening: {int((~keep).sum())}")

swath = [r for r in recs if isinstance(r, SwathObs)]
for s in swath:
    ok = screen_brightness_temperatures(s.lat, s.bt)
    print(f"{s.platform}: {len(s.lat)} pixels, {int((~ok.all(axis=1)).sum())} with a rejected channel")

points = convert_radiosonde_records(points)
ws = datetime(2022, 1, 1, 3)
frames = hourly_frames_points(points, [c.key for c in reg], grid, ws, 8)
tensor = stack_temporal(frames, ws, 8)
print(f"point tensor {tensor.values.shape}, observed entries {int(tensor.mask.sum())}")

ro = encode_time_embedding([r for r in recs if isinstance(r, ProfileObs)], ws, 8, grid)
print(f"RO tensor {ro.values.shape}, profiles placed {int(ro.mask[0, 512].sum())}")
