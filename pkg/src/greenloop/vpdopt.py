"""Outer-loop setpoint optimizer: energy-minimal (T*, RH*) on the VPD curve.

For a VPD target V the constraint curve is rh*(t) = 100*(1 - V/e_s(t)),
strictly increasing in t, which reduces the search to one dimension:

    min over t of  a_h*max(t - t_cur, 0) + a_c*max(t_cur - t, 0)
                 + a_d*max(rh_cur - rh*(t), 0) + a_m*max(rh*(t) - rh_cur, 0)

The feasible t interval is found by bisection on the monotone rh*(t); the
minimum by a 0.05 degC grid plus golden-section refinement of the best
bracket. Infeasible targets degrade to the nearest attainable point with a
warning instead of failing the control loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import psychro


class Infeasible(ValueError):
    """The VPD constraint curve misses the setpoint bounds box entirely."""


class UnattainableTarget(ValueError):
    """vpd_target exceeds e_s(t_max): no RH >= 0 can reach it inside bounds."""


@dataclass(frozen=True)
class EnergyCostCoefficients:
    """Cost per unit setpoint deviation: heat/cool per degC, de/humidify per %RH."""

    alpha_h: float = 1.0
    alpha_c: float = 1.0
    alpha_d: float = 1.0
    alpha_m: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha_h", "alpha_c", "alpha_d", "alpha_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.alpha_h == 0 and self.alpha_c == 0:
            raise ValueError("one of alpha_h/alpha_c must be > 0")
        if self.alpha_d == 0 and self.alpha_m == 0:
            raise ValueError("one of alpha_d/alpha_m must be > 0")


@dataclass(frozen=True)
class SetpointBounds:
    t_min: float
    t_max: float
    rh_min: float
    rh_max: float

    def __post_init__(self) -> None:
        if not self.t_min < self.t_max:
            raise ValueError("t_min must be < t_max")
        if not self.rh_min < self.rh_max:
            raise ValueError("rh_min must be < rh_max")


@dataclass(frozen=True)
class OptimalSetpoint:
    t: float
    rh: float
    cost: float
    feasible: bool
    warning: str | None = None


def energy_cost(
    t_star: float, rh_star: float, t_cur: float, rh_cur: float,
    alpha: EnergyCostCoefficients,
) -> float:
    """Deviation-weighted actuation cost of moving (t_cur, rh_cur) -> (t*, rh*)."""
    return (
        alpha.alpha_h * max(t_star - t_cur, 0.0)
        + alpha.alpha_c * max(t_cur - t_star, 0.0)
        + alpha.alpha_d * max(rh_cur - rh_star, 0.0)
        + alpha.alpha_m * max(rh_star - rh_cur, 0.0)
    )


def _rh_raw(t: float, vpd_target: float) -> float:
    """rh*(t) without range clipping; may be negative when the target exceeds e_s."""
    return 100.0 * (1.0 - vpd_target / psychro.saturation_vapor_pressure(t))


def _bisect_rh(level: float, lo: float, hi: float, vpd_target: float) -> float:
    """t in [lo, hi] with rh*(t) == level, assuming rh*(lo) <= level <= rh*(hi)."""
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _rh_raw(mid, vpd_target) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(f, lo: float, hi: float, tol: float = 1e-7) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_setpoints(
    t_cur: float,
    rh_cur: float,
    vpd_target: float,
    bounds: SetpointBounds,
    alpha: EnergyCostCoefficients,
    strict: bool = False,
    grid_step: float = 0.05,
) -> OptimalSetpoint:
    """Energy-minimal setpoint pair on the VPD constraint curve inside bounds.

    Feasible returns satisfy |vpd(t*, rh*) - vpd_target| <= 1e-6 kPa exactly
    by construction. When the curve misses the bounds box the nearest
    attainable corner is returned with feasible=False and a warning (or
    Infeasible/UnattainableTarget is raised under strict=True).
    """
    if not (math.isfinite(vpd_target) and vpd_target > 0.0):
        raise ValueError(f"vpd target must be a positive number, got {vpd_target!r}")

    # a current point already on the curve (to round-trip precision) and
    # inside bounds is free: nothing beats zero actuation
    if (
        bounds.t_min <= t_cur <= bounds.t_max
        and bounds.rh_min <= rh_cur <= bounds.rh_max
        and abs(psychro.vpd(t_cur, rh_cur) - vpd_target) <= 1e-9
    ):
        return OptimalSetpoint(t=t_cur, rh=rh_cur, cost=0.0, feasible=True, warning=None)

    rh_at_tmin = _rh_raw(bounds.t_min, vpd_target)
    rh_at_tmax = _rh_raw(bounds.t_max, vpd_target)

    if rh_at_tmax < bounds.rh_min:
        # even the hottest, driest allowed air cannot open a deficit this wide
        if vpd_target > psychro.saturation_vapor_pressure(bounds.t_max):
            if strict:
                raise UnattainableTarget(
                    f"vpd target {vpd_target:.4g} kPa exceeds e_s(t_max) "
                    f"= {psychro.saturation_vapor_pressure(bounds.t_max):.4g} kPa"
                )
        elif strict:
            raise Infeasible("constraint curve passes below the bounds box")
        t, rh = bounds.t_max, bounds.rh_min
        return OptimalSetpoint(
            t=t, rh=rh, cost=energy_cost(t, rh, t_cur, rh_cur, alpha), feasible=False,
            warning=(
                f"vpd target {vpd_target:.3f} kPa not reachable inside bounds; "
                f"nearest attainable {psychro.vpd(t, rh):.3f} kPa at ({t:.2f} degC, {rh:.1f}%)"
            ),
        )
    if rh_at_tmin > bounds.rh_max:
        if strict:
            raise Infeasible("constraint curve passes above the bounds box")
        t, rh = bounds.t_min, bounds.rh_max
        return OptimalSetpoint(
            t=t, rh=rh, cost=energy_cost(t, rh, t_cur, rh_cur, alpha), feasible=False,
            warning=(
                f"vpd target {vpd_target:.3f} kPa overshoots every point inside bounds; "
                f"nearest attainable {psychro.vpd(t, rh):.3f} kPa at ({t:.2f} degC, {rh:.1f}%)"
            ),
        )

    t_lo = bounds.t_min if rh_at_tmin >= bounds.rh_min else _bisect_rh(
        bounds.rh_min, bounds.t_min, bounds.t_max, vpd_target
    )
    t_hi = bounds.t_max if rh_at_tmax <= bounds.rh_max else _bisect_rh(
        bounds.rh_max, bounds.t_min, bounds.t_max, vpd_target
    )

    def cost_at(t: float) -> float:
        return energy_cost(t, _rh_raw(t, vpd_target), t_cur, rh_cur, alpha)

    # coarse grid, then golden-section inside the best bracket
    n = max(1, int(math.ceil((t_hi - t_lo) / grid_step)))
    ts = [t_lo + (t_hi - t_lo) * i / n for i in range(n + 1)]
    costs = [cost_at(t) for t in ts]
    i_best = min(range(len(ts)), key=costs.__getitem__)
    lo = ts[max(0, i_best - 1)]
    hi = ts[min(len(ts) - 1, i_best + 1)]
    t_star = _golden(cost_at, lo, hi) if hi > lo else lo

    # candidate breakpoints where the cost kinks; the valley can sit on one
    candidates = [t_star, ts[i_best]]
    if t_lo <= t_cur <= t_hi:
        candidates.append(t_cur)
    rh_cross = _rh_raw(t_lo, vpd_target)
    if rh_cross <= rh_cur <= _rh_raw(t_hi, vpd_target):
        candidates.append(_bisect_rh(rh_cur, t_lo, t_hi, vpd_target))
    t_star = min(candidates, key=cost_at)

    rh_star = _rh_raw(t_star, vpd_target)
    return OptimalSetpoint(
        t=t_star, rh=rh_star, cost=cost_at(t_star), feasible=True, warning=None
    )
