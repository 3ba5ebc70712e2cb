"""The full cascade against a fixed-setpoint baseline, 72 hours of desert.

The baseline controller holds the recipe-stage midpoints with the same
tuned PIDs. The cascade re-optimizes the (T, RH) decomposition of the
stage VPD target every outer cycle using live tariff prices and outdoor
conditions, adapts the inner-loop gains online, and rides through the
scripted heat-spike disturbance. Same plant, same weather, same seed.

Takes about 15 seconds.
"""

import time

from greenloop.supervisor import run_scenario

t0 = time.perf_counter()
base = run_scenario("desert", controller="baseline", seed=1)
casc = run_scenario("desert", controller="cascade", seed=1)
wall = time.perf_counter() - t0


def row(label, b, c, unit="", better="lower"):
    cut = (b - c) / b * 100.0 if b else 0.0
    arrow = "lower" if c < b else "higher"
    print(f"  {label:<22} {b:>10.3f}  {c:>10.3f} {unit:<4} "
          f"({abs(cut):.1f}% {arrow})")


print(f"72 h desert, seed 1, simulated in {wall:.1f} s wall time\n")
print(f"  {'':<22} {'baseline':>10}  {'cascade':>10}")
row("energy", base.total_kwh, casc.total_kwh, "kWh")
row("tariff cost", base.tariff_cost, casc.tariff_cost, "")
row("VPD sigma", base.vpd_sigma, casc.vpd_sigma, "kPa")
row("mean |VPD error|", base.vpd_mean_abs_err, casc.vpd_mean_abs_err, "kPa")

print(f"\nheat spike at t = {casc.disturbance_at_s:.0f} s:")
print(f"  baseline recovery {base.recovery_s} s, "
      f"cascade recovery {casc.recovery_s:.0f} s")

print("\nwhere the energy went (kWh):")
for k in sorted(casc.energy_kwh):
    print(f"  {k:<14} baseline {base.energy_kwh[k]:8.2f}   "
          f"cascade {casc.energy_kwh[k]:8.2f}")

print(f"\ndehumidifier on/off transitions: "
      f"baseline {base.switching.get('dehumidifier', 0)}, "
      f"cascade {casc.switching.get('dehumidifier', 0)}")
print(f"cascade autotune: " + ", ".join(
    f"{loop} Ku={info['ku']:.2f} Tu={info['tu']:.0f}s"
    for loop, info in sorted(casc.autotune.items())))
