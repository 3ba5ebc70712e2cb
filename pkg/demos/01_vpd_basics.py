"""Vapor pressure deficit from first principles.

VPD is the gap between how much water the air could hold and how much it
does hold, in kPa. Plants transpire against it: too low and the canopy
stops moving water, too high and stomata slam shut. Everything else in
this package exists to keep this one number in a band.
"""

from greenloop import psychro

# Saturation pressure rises roughly exponentially with temperature. This
# is why temperature, not humidity, is the dominant lever on VPD.
print("saturation vapor pressure:")
for t in (0.0, 10.0, 20.0, 30.0, 40.0):
    print(f"  {t:4.0f} C  ->  {psychro.saturation_vapor_pressure(t):6.3f} kPa")

print()
print("VPD across a typical grow window (rows: C, cols: %RH):")
header = "      " + "".join(f"{rh:>7.0f}" for rh in (40, 50, 60, 70, 80))
print(header)
for t in (18, 21, 24, 27, 30):
    row = "".join(f"{psychro.vpd(t, rh):7.2f}" for rh in (40, 50, 60, 70, 80))
    print(f"  {t:2d} C{row}")

# Inverting the relationship: what humidity holds VPD at 1.0 kPa?
print()
print("RH needed for VPD = 1.0 kPa:")
for t in (18.0, 22.0, 26.0, 30.0):
    print(f"  {t:4.1f} C  ->  {psychro.rh_for_target(t, 1.0):5.1f} %RH")

# A 1.2 kPa target is unattainable at 5 C: even bone-dry air tops out at
# the saturation pressure, 0.87 kPa.
try:
    psychro.rh_for_target(5.0, 1.2)
except psychro.Unattainable as exc:
    print(f"\nimpossible ask rejected: {exc}")

# The sensitivity ratio quantifies the temperature lever. Across the
# common setpoint box a degree of temperature moves VPD about 2.7x as
# much as a point of humidity.
print()
print("d(VPD)/dT vs |d(VPD)/dRH| (per C vs per %RH):")
for t, rh in ((20.0, 50.0), (25.0, 55.0), (30.0, 70.0)):
    dt, drh = psychro.vpd_sensitivities(t, rh)
    print(f"  {t:4.1f} C / {rh:4.1f} %RH : {dt:.4f} vs {abs(drh):.4f}"
          f"  (ratio {dt / abs(drh):.2f})")

# Leaves run cooler than air under transpiration; the deficit the plant
# actually sees uses leaf temperature for the saturation side.
print()
lv = psychro.leaf_vpd(t_leaf=23.1, t_air=24.0, rh=60.0)
print(f"air-based VPD {psychro.vpd(24.0, 60.0):.3f} kPa, "
      f"leaf-based {lv.value:.3f} kPa (leaf 0.9 C cooler)")
cold = psychro.leaf_vpd(t_leaf=21.0, t_air=24.0, rh=85.0)
print(f"cold leaf in humid air: {cold.value:+.3f} kPa, "
      f"condensation risk = {cold.condensation}")
