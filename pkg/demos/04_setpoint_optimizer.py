"""Energy-minimal decomposition of a VPD target into (T, RH) setpoints.

Any VPD target is a whole curve of (temperature, humidity) pairs. Which
point on the curve should the zone hold? The one that is cheapest to
reach from where the air already is, given what heating, cooling,
humidifying and drying each cost. The optimizer walks the constraint
curve inside the setpoint box and returns the minimum-cost point; the
returned pair satisfies the VPD constraint to 1e-6 kPa by construction.
"""

from greenloop import psychro
from greenloop.vpdopt import (EnergyCostCoefficients, Infeasible,
                              SetpointBounds, optimize_setpoints)

bounds = SetpointBounds(t_min=18.0, t_max=30.0, rh_min=40.0, rh_max=80.0)

# symmetric costs first: a hot dry afternoon, target 1.2 kPa
even = EnergyCostCoefficients(alpha_h=1.0, alpha_c=1.0, alpha_d=1.0, alpha_m=1.0)
r = optimize_setpoints(t_cur=32.0, rh_cur=25.0, vpd_target=1.2,
                       bounds=bounds, alpha=even)
print("hot dry air (32 C / 25 %RH), target 1.2 kPa, even costs:")
print(f"  hold {r.t:.2f} C / {r.rh:.1f} %RH, cost {r.cost:.2f}, "
      f"residual {abs(psychro.vpd(r.t, r.rh) - 1.2):.1e} kPa")

# make cooling 5x the price of humidifying and the answer slides along
# the curve: keep the zone warmer, add more water instead
pricey_cooling = EnergyCostCoefficients(alpha_h=1.0, alpha_c=5.0,
                                        alpha_d=1.0, alpha_m=0.2)
r2 = optimize_setpoints(t_cur=32.0, rh_cur=25.0, vpd_target=1.2,
                        bounds=bounds, alpha=pricey_cooling)
print("same air, cooling 5x humidification:")
print(f"  hold {r2.t:.2f} C / {r2.rh:.1f} %RH, cost {r2.cost:.2f} "
      f"(was {r.t:.2f} C / {r.rh:.1f} %RH)")

# a point already on the curve is free
t0 = 24.0
rh0 = psychro.rh_for_target(t0, 1.2)
free = optimize_setpoints(t_cur=t0, rh_cur=rh0, vpd_target=1.2,
                          bounds=bounds, alpha=even)
print(f"already on the curve at {t0} C / {rh0:.2f} %RH: cost {free.cost}")

# when the curve misses the box entirely the optimizer degrades politely:
# nearest corner, feasible=False, and a warning saying how far off it is
tight = SetpointBounds(t_min=18.0, t_max=20.0, rh_min=70.0, rh_max=80.0)
r3 = optimize_setpoints(t_cur=22.0, rh_cur=60.0, vpd_target=2.0,
                        bounds=tight, alpha=even)
print(f"\nimpossible box: feasible={r3.feasible}, "
      f"fallback {r3.t:.1f} C / {r3.rh:.1f} %RH")
print(f"  warning: {r3.warning}")

# strict mode raises instead, for callers that must not silently degrade
try:
    optimize_setpoints(t_cur=22.0, rh_cur=60.0, vpd_target=2.0,
                       bounds=tight, alpha=even, strict=True)
except Infeasible as exc:
    print(f"  strict mode: Infeasible({exc})")
