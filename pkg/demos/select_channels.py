"""Thin the synthetic sounder Jacobian table by peak pressure and gap-fill to 38 channels."""

from assimkit.channel_select import band_counts, gap_fill, interval_sample, synthetic_fixture

sounding, window = synthetic_fixture()
kept = interval_sample(sounding)
ids = {c.channel_id for c in kept}
res = gap_fill(kept, [c for c in sounding if c.channel_id not in ids] + window, {"co2": 21, "h2o": 16, "window": 1})
print("input:", band_counts(sounding), "+", band_counts(window))
print("after interval sampling:", band_counts(kept))
print("added by gap fill:", band_counts(res.added))
print("final:", band_counts(res.channels), "=", len(res.channels))
for c in res.channels:
    print(f"  {c.channel_id:4d} {c.band:6s} {c.peak_pressure:6.0f} hPa")
