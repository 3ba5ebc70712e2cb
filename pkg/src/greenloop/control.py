"""Inner-loop machinery: velocity-form PID, relay autotune, cycle protection.

The PID is the incremental (velocity) form

    du(k) = Kp*(e(k) - e(k-1)) + Ki*e(k) + Kd*(e(k) - 2e(k-1) + e(k-2))
    u(k)  = clamp(u(k-1) + du(k))

with conditional integration: the Ki term is dropped while the output sits
on a limit and the current error would push it further in. Auto-tuning uses
relay feedback (ultimate gain Ku = 4h/(pi*a)) with Ziegler-Nichols rules
Kp = 0.6*Ku, Ti = Tu/2, Td = Tu/8, discretized as ki = kp*dt/Ti,
kd = kp*Td/dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable


class NoOscillation(RuntimeError):
    """Relay feedback produced no limit cycle (plant too damped or h too small)."""


class Timeout(RuntimeError):
    """Relay feedback oscillated but never met the convergence criterion in time."""


@dataclass(frozen=True)
class GainSet:
    """Dimensionless discrete PID gains at sample period dt seconds."""

    kp: float
    ki: float
    kd: float
    dt: float

    def __post_init__(self) -> None:
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("PID gains must be >= 0")
        if self.dt <= 0:
            raise ValueError("sample period must be > 0")


def zn_gains(ku: float, tu: float, dt: float, quality: str = "good") -> GainSet:
    """Ziegler-Nichols PID gains from ultimate gain/period, discretized at dt.

    quality "poor" falls back to a conservative kp = 0.3*Ku.
    """
    kp = (0.6 if quality == "good" else 0.3) * ku
    ti = tu / 2.0
    td = tu / 8.0
    return GainSet(kp=kp, ki=kp * dt / ti, kd=kp * td / dt, dt=dt)


class VelocityPid:
    """One velocity-form PID loop holding its own error/output history."""

    __slots__ = ("e1", "e2", "u", "u_min", "u_max", "anti_windup", "saturated")

    def __init__(
        self,
        u_min: float = 0.0,
        u_max: float = 1.0,
        u_init: float | None = None,
        anti_windup: bool = True,
    ) -> None:
        if u_min >= u_max:
            raise ValueError("u_min must be < u_max")
        self.u_min = u_min
        self.u_max = u_max
        self.u = u_min if u_init is None else min(max(u_init, u_min), u_max)
        self.e1 = 0.0
        self.e2 = 0.0
        self.anti_windup = anti_windup
        self.saturated = self.u <= u_min or self.u >= u_max

    def step(self, gains: GainSet, sp: float, pv: float) -> tuple[float, float]:
        """Advance one sample; returns (du per the velocity law, clamped u)."""
        if not (math.isfinite(sp) and math.isfinite(pv)):
            raise ValueError(f"non-finite PID input sp={sp!r} pv={pv!r}")
        e = sp - pv
        integral = gains.ki * e
        if self.anti_windup and self.saturated:
            # conditional integration: skip Ki*e while pinned and pushing in
            if (self.u >= self.u_max and e > 0.0) or (self.u <= self.u_min and e < 0.0):
                integral = 0.0
        du = gains.kp * (e - self.e1) + integral + gains.kd * (e - 2.0 * self.e1 + self.e2)
        u = min(max(self.u + du, self.u_min), self.u_max)
        self.e2 = self.e1
        self.e1 = e
        self.u = u
        self.saturated = u <= self.u_min or u >= self.u_max
        return du, u


@dataclass(frozen=True)
class AutotuneResult:
    """Outcome of one relay-feedback identification pass."""

    h: float            # relay amplitude
    a: float            # measured oscillation amplitude of pv
    ku: float           # ultimate gain 4h/(pi*a)
    tu: float           # ultimate period, s
    gains: GainSet
    quality: str        # "good" | "poor"
    duration: float     # simulated seconds the tune took


def relay_autotune(
    plant: Callable[[float], float],
    sp: float,
    h: float,
    sim_dt: float,
    control_dt: float,
    max_duration: float,
    u_bias: float = 0.0,
    plant_sign: float = 1.0,
    hysteresis: float = 0.0,
    settle_cycles: int = 2,
    required_periods: int = 4,
    period_tolerance: float = 0.05,
) -> AutotuneResult:
    """Relay-feedback autotune against a plant callable u -> pv (one sim_dt step).

    The relay output is u_bias +/- h (biased around the operating point);
    hysteresis should be ~2x the sensor noise sigma. Converges when
    `required_periods` consecutive periods agree within `period_tolerance`
    of their mean; gains come from ZN rules discretized at control_dt.
    """
    if h <= 0:
        raise ValueError("relay amplitude h must be > 0")
    sign = 1.0 if plant_sign >= 0 else -1.0
    relay_high = True            # start pushing pv upward
    t = 0.0
    e_prev: float | None = None
    rising_edges: list[float] = []     # interpolated e-crossing times at relay flips to high
    toggles = 0
    cycle_peaks: list[tuple[float, float]] = []   # (min pv, max pv) per completed cycle
    cur_min = math.inf
    cur_max = -math.inf
    trace_t: list[float] = []
    trace_pv: list[float] = []

    while t < max_duration:
        u = u_bias + (h if relay_high else -h) * sign
        pv = plant(u)
        if not math.isfinite(pv):
            raise RuntimeError(f"plant returned non-finite pv {pv!r} during autotune")
        t += sim_dt
        e = sp - pv
        cur_min = min(cur_min, pv)
        cur_max = max(cur_max, pv)
        trace_t.append(t)
        trace_pv.append(pv)

        flipped = False
        if relay_high and e < -hysteresis:
            relay_high = False
            flipped = True
        elif not relay_high and e > hysteresis:
            relay_high = True
            flipped = True
            # interpolate the actual crossing instant for a sharper period
            if e_prev is not None and e != e_prev:
                frac = (hysteresis - e_prev) / (e - e_prev)
                frac = min(max(frac, 0.0), 1.0)
            else:
                frac = 1.0
            t_cross = t - sim_dt + frac * sim_dt
            rising_edges.append(t_cross)
            if len(rising_edges) > 1:
                cycle_peaks.append((cur_min, cur_max))
                cur_min = math.inf
                cur_max = -math.inf
        if flipped:
            toggles += 1

        if len(rising_edges) >= settle_cycles + required_periods + 1:
            periods = [
                b - a for a, b in zip(rising_edges[:-1], rising_edges[1:])
            ][-required_periods:]
            mean_p = sum(periods) / len(periods)
            if mean_p > 0 and all(abs(p - mean_p) / mean_p <= period_tolerance for p in periods):
                a = _fundamental_amplitude(trace_t, trace_pv, mean_p, required_periods)
                if a <= 0:
                    raise NoOscillation("relay toggled but pv amplitude is zero")
                peak_amps = [(hi - lo) / 2.0 for lo, hi in cycle_peaks[-required_periods:]]
                mean_peak = sum(peak_amps) / len(peak_amps)
                spread = (max(peak_amps) - min(peak_amps)) / mean_peak if mean_peak > 0 else 1.0
                quality = "good" if spread <= 0.2 else "poor"
                ku = 4.0 * h / (math.pi * a)
                return AutotuneResult(
                    h=h,
                    a=a,
                    ku=ku,
                    tu=mean_p,
                    gains=zn_gains(ku, mean_p, control_dt, quality),
                    quality=quality,
                    duration=t,
                )
        e_prev = e

    if toggles < 3:
        raise NoOscillation(
            f"relay produced {toggles} toggles in {max_duration:.0f}s; plant too damped or h too small"
        )
    raise Timeout(f"oscillation never converged within {max_duration:.0f}s")


def _fundamental_amplitude(ts: list[float], pvs: list[float], period: float, cycles: int) -> float:
    """Amplitude of the fundamental Fourier component over the trailing cycles.

    The relay limit cycle is not sinusoidal (near-triangular for small L/tau),
    so its raw peak overstates the describing-function amplitude by up to
    pi^2/8; the fundamental is the measure Ku = 4h/(pi*a) is derived for.
    """
    window = cycles * period
    t_end = ts[-1]
    i0 = 0
    for i in range(len(ts) - 1, -1, -1):
        if t_end - ts[i] > window:
            i0 = i + 1
            break
    seg_t = ts[i0:]
    seg_pv = pvs[i0:]
    mean = sum(seg_pv) / len(seg_pv)
    w = 2.0 * math.pi / period
    cos_sum = 0.0
    sin_sum = 0.0
    for tt, vv in zip(seg_t, seg_pv):
        cos_sum += (vv - mean) * math.cos(w * tt)
        sin_sum += (vv - mean) * math.sin(w * tt)
    n = len(seg_pv)
    return 2.0 * math.hypot(cos_sum, sin_sum) / n


class CycleGuard:
    """Minimum on/off time enforcement for one staged (binary) actuator."""

    __slots__ = ("min_on", "min_off", "state", "last_change", "transitions")

    def __init__(self, min_on: float = 300.0, min_off: float = 180.0) -> None:
        self.min_on = min_on
        self.min_off = min_off
        self.state = False
        # fresh unit counts as long since off, so an immediate start is legal
        self.last_change = -min_off
        self.transitions = 0

    def filter(self, desired: bool, now: float) -> bool:
        """Emit the guarded state for this tick; holds until the dwell elapses."""
        if desired != self.state:
            held = now - self.last_change
            if self.state and held >= self.min_on:
                self.state = False
                self.last_change = now
                self.transitions += 1
            elif not self.state and held >= self.min_off:
                self.state = True
                self.last_change = now
                self.transitions += 1
        return self.state
