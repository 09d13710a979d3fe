"""Score a damped forecast against its truth: RMSE, ACC, activity and a paired t-test."""

from datetime import datetime, timedelta

import numpy as np

from assimkit import synthetic
from assimkit.grid import GridSpec, latitude_weights, make_channel_registry
from assimkit.metrics import ScoreSeries, acc, effective_lead_time, great_circle_km, paired_t_test, wrmse

grid, reg = GridSpec.from_shape(32, 64), make_channel_registry(False)
t0 = datetime(2022, 1, 1)
clim = synthetic.climatology(grid, reg, t0)
w = latitude_weights(grid)
z500 = reg.index("Z", 500)

leads, accs, rm_a, rm_b = [], [], [], []
init = synthetic.truth_at(grid, reg, t0, 0, 1, seed=0)
for lead in range(1, 41):
    truth = synthetic.truth_at(grid, reg, t0, lead, 1, seed=0)
    fa = synthetic.damped_forecast(init, lead, 1, 0.02)
    fb = synthetic.damped_forecast(init, lead, 0, 0.0)  # persistence
    leads.append(lead / 4)
    accs.append(acc(fa, truth, clim.replace(valid_time=truth.valid_time), w)[z500])
    rm_a.append(wrmse(fa, truth, w)[z500])
    rm_b.append(wrmse(fb, truth, w)[z500])

print(f"Z500 ACC at day 5: {accs[19]:.3f}, effective lead (ACC >= 0.6): {effective_lead_time(leads, accs)} days")
stamps = [t0 + timedelta(hours=6 * k) for k in range(1, 41)]
res = paired_t_test(ScoreSeries(stamps, rm_a), ScoreSeries(stamps, rm_b))
print(f"damped advection vs persistence: mean normalised RMSE difference {res.mean:+.3f}, 95% CI [{res.ci_low:+.3f}, {res.ci_high:+.3f}]")
print(f"1 degree of longitude on the equator: {great_circle_km(0, 0, 0, 1):.2f} km")
