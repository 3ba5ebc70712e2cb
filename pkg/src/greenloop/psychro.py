"""Psychrometric core: saturation vapor pressure, VPD, and sensitivities.

Saturation pressure uses the Tetens form with the Alduchov-Eskridge
coefficients,

    e_s(T) = 0.61094 * exp(17.625 * T / (T + 243.04))   [kPa, T in degC]

which stays within ~0.25% of standard reference tables over the
horticultural range. All functions are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Tetens coefficients (Alduchov-Eskridge)
_ES_A = 0.61094   # kPa
_ES_B = 17.625
_ES_C = 243.04    # degC

# validity window; covers indoor zones plus the outdoor scenario extremes
T_MIN = -20.0
T_MAX = 60.0


class DomainError(ValueError):
    """Input outside the supported psychrometric domain."""


class Unattainable(ValueError):
    """Requested VPD target exceeds the saturation pressure at this temperature."""


def _check_t(t: float) -> None:
    if not math.isfinite(t) or not (T_MIN <= t <= T_MAX):
        raise DomainError(f"temperature {t!r} degC outside [{T_MIN}, {T_MAX}]")


def _check_rh(rh: float) -> None:
    if not math.isfinite(rh) or not (0.0 <= rh <= 100.0):
        raise DomainError(f"relative humidity {rh!r}% outside [0, 100]")


def saturation_vapor_pressure(t: float) -> float:
    """Saturation vapor pressure e_s in kPa at air temperature t in degC."""
    _check_t(t)
    return _ES_A * math.exp(_ES_B * t / (t + _ES_C))


def saturation_slope(t: float) -> float:
    """d e_s / dT in kPa per degC (analytic derivative of the Tetens form)."""
    _check_t(t)
    es = _ES_A * math.exp(_ES_B * t / (t + _ES_C))
    return es * _ES_B * _ES_C / (t + _ES_C) ** 2


def vpd(t: float, rh: float) -> float:
    """Air vapor pressure deficit in kPa: e_s(t) - e_s(t) * rh/100.

    Written in distributed form so leaf_vpd(t, t, rh) equals vpd(t, rh)
    bit-exactly.
    """
    _check_rh(rh)
    es = saturation_vapor_pressure(t)
    return es - es * rh / 100.0


@dataclass(frozen=True)
class LeafVpd:
    """Signed leaf-to-air deficit; negative means condensation risk on the canopy."""

    value: float          # kPa, e_s(t_leaf) - e_a(air)
    condensation: bool    # True when value < 0 (dew can form on leaves)


def leaf_vpd(t_leaf: float, t_air: float, rh: float) -> LeafVpd:
    """Leaf VPD in kPa: e_s(t_leaf) - e_s(t_air) * rh/100, sign preserved."""
    _check_rh(rh)
    v = saturation_vapor_pressure(t_leaf) - saturation_vapor_pressure(t_air) * rh / 100.0
    return LeafVpd(value=v, condensation=v < 0.0)


def canopy_vpd(t_leaves: list[float], t_air: float, rh: float) -> LeafVpd:
    """Spatial-average leaf VPD over >=2 canopy temperature points."""
    if len(t_leaves) < 2:
        raise DomainError("canopy mode needs at least 2 leaf-temperature points")
    vals = [leaf_vpd(tl, t_air, rh).value for tl in t_leaves]
    mean = sum(vals) / len(vals)
    return LeafVpd(value=mean, condensation=mean < 0.0)


def rh_for_target(t: float, vpd_target: float) -> float:
    """RH in % that yields vpd_target at temperature t: the VPD constraint curve.

    Raises Unattainable when vpd_target > e_s(t) (would need RH < 0).
    """
    if not math.isfinite(vpd_target) or vpd_target < 0.0:
        raise DomainError(f"vpd target {vpd_target!r} kPa must be >= 0")
    es = saturation_vapor_pressure(t)
    if vpd_target > es:
        raise Unattainable(
            f"vpd target {vpd_target:.4g} kPa exceeds e_s({t:.4g} degC) = {es:.4g} kPa"
        )
    return 100.0 * (1.0 - vpd_target / es)


def vpd_sensitivities(t: float, rh: float) -> tuple[float, float]:
    """Analytic partials (dVPD/dT in kPa/degC, dVPD/dRH in kPa/%)."""
    _check_rh(rh)
    dt = saturation_slope(t) * (1.0 - rh / 100.0)
    drh = -saturation_vapor_pressure(t) / 100.0
    return dt, drh
