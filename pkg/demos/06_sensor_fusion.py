"""Three temperature probes, one quietly drifting out of calibration.

Redundant sensors disagree all the time; the question is which one to
believe. Fusion here is variance-weighted averaging with a robust
median-absolute-deviation outlier score. A sensor that strays is
excluded from the blend, flagged, and kept on the bench until it has
behaved for a full hour.
"""

import random

from greenloop.fusion import SensorReading, ZoneFusion

TRUTH = 23.0
DRIFT_PER_HOUR = 0.05          # slow enough to pass casual inspection
NOISE = 0.02                   # ordinary probe jitter, degC

rng = random.Random(11)
fusion = ZoneFusion()
flagged_at = None
worst_err = 0.0

for minute in range(48 * 60):
    ts = minute * 60.0
    drift = DRIFT_PER_HOUR * ts / 3600.0
    readings = [
        SensorReading("t-a", "t_air", TRUTH + rng.gauss(0.0, NOISE), ts),
        SensorReading("t-b", "t_air", TRUTH + rng.gauss(0.0, NOISE), ts),
        SensorReading("t-c", "t_air", TRUTH + drift + rng.gauss(0.0, NOISE), ts),
    ]
    result, events = fusion.step(readings)
    for ev in events:
        print(f"  {ev.timestamp / 3600.0:5.1f} h  {ev.sensor_id} "
              f"{ev.action} (score {ev.score:.1f})")
        if ev.action == "excluded" and flagged_at is None:
            flagged_at = ts
    if flagged_at is not None:
        worst_err = max(worst_err, abs(result.value - TRUTH))

print(f"\ndrifting probe t-c caught after {flagged_at / 3600.0:.1f} h "
      f"({DRIFT_PER_HOUR * flagged_at / 3600.0:.3f} C of accumulated drift)")
print(f"fused estimate stayed within {worst_err:.3f} C of truth afterwards")
print(f"currently benched: {fusion.excluded_ids()}")

# two-sensor zones cannot vote a sensor out (no majority); the blend
# just widens. Three is the minimum for exclusion, by design.
small = ZoneFusion()
r, ev = small.step([SensorReading("a", "rh", 60.0, 0.0),
                    SensorReading("b", "rh", 64.0, 0.0)])
print(f"\ntwo-sensor zone, 4 %RH apart: fused {r.value:.1f} %RH, "
      f"flagged {r.flagged or 'nobody'} (no quorum to exclude)")
