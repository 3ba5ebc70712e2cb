"""Deterministic simulated grow zone.

Coupled air-temperature / absolute-humidity dynamics for a single zone,
an actuator bank with electrical power draw, and outdoor weather plus
tariff scenarios. Explicit Euler at small dt; every trajectory is a pure
function of (scenario, seed, commands), so runs replay bit-identically.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

from . import psychro

# gas constant for water vapor, J/(kg K)
_R_VAPOR = 461.5
# volumetric heat capacity of air, J/(m^3 K); used for ventilation exchange
_AIR_VOL_HEAT = 1206.0

ACTUATOR_KINDS = ("heater", "cooler", "dehumidifier", "humidifier", "fan")


class SimulationFault(RuntimeError):
    """Zone state went non-finite; the run cannot continue."""


def _es(t: float) -> float:
    # same saturation curve as the control library, but without its valid
    # range guard: an uncontrolled zone may wander outside that envelope
    # and the simulation must keep integrating rather than abort
    return psychro._ES_A * math.exp(psychro._ES_B * t / (t + psychro._ES_C))


def abs_humidity_from_rh(rh: float, t: float) -> float:
    """Absolute humidity (g/m^3) from relative humidity (%) at t (degC)."""
    e = _es(t) * rh / 100.0
    return e * 1.0e6 / (_R_VAPOR * (t + 273.15))


def rh_from_abs_humidity(x: float, t: float) -> float:
    """Relative humidity (%) from absolute humidity (g/m^3) at t (degC)."""
    e = x * _R_VAPOR * (t + 273.15) / 1.0e6
    rh = 100.0 * e / _es(t)
    return min(max(rh, 0.0), 100.0)


def saturation_abs_humidity(t: float) -> float:
    return abs_humidity_from_rh(100.0, t)


@dataclass
class ZoneState:
    """Instantaneous zone condition. rh is derived, never stored."""

    t_air: float
    abs_humidity: float
    t_leaf: float
    clock: float = 0.0

    @property
    def rh(self) -> float:
        return rh_from_abs_humidity(self.abs_humidity, self.t_air)


@dataclass
class Actuator:
    """One unit of the bank.

    capacity is thermal W for heater/cooler, g/s of water moved for the
    humidity pair, and m^3/s of extra outdoor-air exchange for the fan.
    power is electrical W at full command. Staged units are on/off only.
    """

    kind: str
    capacity: float
    power: float
    staged: bool = False
    command: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTUATOR_KINDS:
            raise ValueError(f"unknown actuator kind {self.kind!r}")
        if self.capacity < 0 or self.power < 0:
            raise ValueError("capacity and power must be nonnegative")

    def set_command(self, value: float) -> float:
        v = min(max(float(value), 0.0), 1.0)
        if self.staged:
            v = 1.0 if v >= 0.5 else 0.0
        self.command = v
        return v

    @property
    def on(self) -> bool:
        return self.command > 0.0


@dataclass
class ActuatorBank:
    actuators: dict[str, Actuator]

    def __getitem__(self, name: str) -> Actuator:
        return self.actuators[name]

    def output(self, kind: str) -> float:
        """Summed capacity * command over all units of one kind."""
        return sum(a.capacity * a.command
                   for a in self.actuators.values() if a.kind == kind)

    def set_command(self, name: str, value: float) -> float:
        return self.actuators[name].set_command(value)


def default_bank() -> ActuatorBank:
    """Bank sized for one ~500 m^2 zone (about 2000 m^3 of air)."""
    return ActuatorBank({
        "heater": Actuator("heater", capacity=15000.0, power=15000.0),
        "cooler": Actuator("cooler", capacity=20000.0, power=6700.0),
        "dehumidifier": Actuator("dehumidifier", capacity=4.0, power=3500.0,
                                 staged=True),
        "humidifier": Actuator("humidifier", capacity=5.0, power=1200.0),
        "fan": Actuator("fan", capacity=2.0, power=1500.0),
    })


@dataclass(frozen=True)
class PlantParams:
    """Lumped first-order zone model parameters."""

    thermal_capacitance: float = 5.0e6    # J/degC
    envelope_conductance: float = 500.0   # W/degC
    moisture_capacitance: float = 2500.0  # m^3 effective moisture volume
    infiltration: float = 0.17            # m^3/s outdoor air exchange
    transpiration_rate: float = 3.5       # g/s per kPa of air VPD
    leaf_lag: float = 300.0               # s, leaf temperature time constant
    dehumidifier_latent: float = 2450.0   # J per g condensed, rejected to zone

    def __post_init__(self):
        for name, v in self.__dict__.items():
            # transpiration may be absent (bare zone); everything else
            # divides or scales the balances and must stay positive
            if name == "transpiration_rate":
                if v < 0:
                    raise ValueError("transpiration_rate must be nonnegative")
            elif not v > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class WeatherSample:
    t_out: float
    rh_out: float

    @property
    def abs_humidity(self) -> float:
        return abs_humidity_from_rh(self.rh_out, self.t_out)


@dataclass(frozen=True)
class StepEvent:
    """Outdoor step disturbance: offsets applied while active."""

    at_s: float
    duration_s: float  # math.inf for a permanent step
    dt_out: float = 0.0
    drh_out: float = 0.0

    def active(self, t_s: float) -> bool:
        return self.at_s <= t_s < self.at_s + self.duration_s


@dataclass(frozen=True)
class ForecastPoint:
    t_s: float
    t_out: float
    rh_out: float


@dataclass(frozen=True)
class WeatherScenario:
    """Sinusoidal diurnal weather, hourly tariff, optional step events.

    Everything, including forecast noise, is a deterministic function of
    (scenario fields, seed, query time): no hidden RNG state.
    """

    name: str
    duration_s: float
    t_mean: float
    t_amp: float
    rh_mean: float
    rh_amp: float
    tariff: tuple[float, ...]      # price per kWh for each of 24 hours
    seed: int
    t_peak_hour: float = 15.0
    events: tuple[StepEvent, ...] = ()
    forecast_noise_t: float = 1.0  # sigma degC
    forecast_noise_rh: float = 3.0  # sigma %

    def __post_init__(self):
        if len(self.tariff) != 24:
            raise ValueError("tariff table must have 24 hourly prices")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")

    def outdoor(self, t_s: float) -> WeatherSample:
        h = (t_s / 3600.0) % 24.0
        phase = 2.0 * math.pi * (h - self.t_peak_hour) / 24.0
        t = self.t_mean + self.t_amp * math.cos(phase)
        rh = self.rh_mean - self.rh_amp * math.cos(phase)
        for ev in self.events:
            if ev.active(t_s):
                t += ev.dt_out
                rh += ev.drh_out
        return WeatherSample(t, min(max(rh, 1.0), 100.0))

    def tariff_at(self, t_s: float) -> float:
        return self.tariff[int(t_s // 3600.0) % 24]

    def forecast(self, now_s: float, horizon_s: float,
                 step_s: float = 3600.0) -> list[ForecastPoint]:
        """Noisy forecast of the true trajectory, reproducible per sample."""
        out = []
        t = now_s
        while t <= now_s + horizon_s:
            truth = self.outdoor(t)
            rng = random.Random(f"{self.seed}:{int(t)}")
            ft = truth.t_out + rng.gauss(0.0, self.forecast_noise_t)
            fr = truth.rh_out + rng.gauss(0.0, self.forecast_noise_rh)
            out.append(ForecastPoint(t, ft, min(max(fr, 1.0), 100.0)))
            t += step_s
        return out


def builtin_scenarios() -> dict[str, WeatherScenario]:
    """The four stock scenarios used throughout the tests and demos."""
    night_discount = tuple(0.08 if h < 6 or h >= 22 else
                           0.30 if 14 <= h < 20 else 0.15
                           for h in range(24))
    winter_tariff = tuple(0.28 if 17 <= h < 21 else 0.18 for h in range(24))
    summer_tariff = tuple(0.22 if 13 <= h < 19 else 0.12 for h in range(24))
    flat = tuple(0.15 for _ in range(24))
    return {
        "desert": WeatherScenario(
            name="desert", duration_s=72 * 3600.0,
            t_mean=29.0, t_amp=14.0, rh_mean=10.0, rh_amp=4.0,
            tariff=night_discount, seed=11,
            events=(StepEvent(at_s=36 * 3600.0, duration_s=3 * 3600.0,
                              dt_out=15.0),),
        ),
        "continental_winter": WeatherScenario(
            name="continental_winter", duration_s=72 * 3600.0,
            t_mean=-8.0, t_amp=7.0, rh_mean=70.0, rh_amp=10.0,
            tariff=winter_tariff, seed=12, t_peak_hour=14.0,
        ),
        "continental_summer": WeatherScenario(
            name="continental_summer", duration_s=72 * 3600.0,
            t_mean=24.0, t_amp=8.0, rh_mean=55.0, rh_amp=15.0,
            tariff=summer_tariff, seed=13,
        ),
        "step_disturbance": WeatherScenario(
            name="step_disturbance", duration_s=6 * 3600.0,
            t_mean=20.0, t_amp=0.0, rh_mean=40.0, rh_amp=0.0,
            tariff=flat, seed=14,
            events=(StepEvent(at_s=3600.0, duration_s=math.inf, dt_out=8.0),),
        ),
    }


class EnergyLedger:
    """Per-actuator electrical energy, binned by clock hour.

    Hourly bins are exact for hourly tariffs and keep long runs cheap to
    account for.
    """

    def __init__(self):
        self.wh: dict[str, dict[int, float]] = {}

    def add(self, name: str, watts: float, t_s: float, dt_s: float) -> None:
        if watts == 0.0:
            return
        bins = self.wh.setdefault(name, {})
        hour = int(t_s // 3600.0)
        bins[hour] = bins.get(hour, 0.0) + watts * dt_s / 3600.0

    def kwh(self, name: str | None = None) -> float:
        if name is not None:
            return sum(self.wh.get(name, {}).values()) / 1000.0
        return sum(sum(b.values()) for b in self.wh.values()) / 1000.0

    def kwh_by_hour(self, name: str | None = None) -> dict[int, float]:
        out: dict[int, float] = {}
        items = [self.wh.get(name, {})] if name is not None else self.wh.values()
        for bins in items:
            for hour, wh in bins.items():
                out[hour] = out.get(hour, 0.0) + wh / 1000.0
        return out


@dataclass(frozen=True)
class EnergyReport:
    per_actuator_kwh: dict[str, float]
    total_kwh: float
    cost: float
    cost_per_actuator: dict[str, float]


def energy_report(ledger: EnergyLedger,
                  scenario: WeatherScenario) -> EnergyReport:
    """kWh per actuator and tariff-weighted cost for a completed run."""
    per = {name: ledger.kwh(name) for name in ledger.wh}
    cost_per = {}
    for name in ledger.wh:
        cost_per[name] = sum(
            kwh * scenario.tariff[hour % 24]
            for hour, kwh in ledger.kwh_by_hour(name).items())
    return EnergyReport(per_actuator_kwh=per,
                        total_kwh=sum(per.values()),
                        cost=sum(cost_per.values()),
                        cost_per_actuator=cost_per)


def step(state: ZoneState, bank: ActuatorBank, sample: WeatherSample,
         params: PlantParams, dt: float,
         ledger: EnergyLedger | None = None) -> ZoneState:
    """One explicit-Euler update of the zone.

    Heat balance: heater - cooler + envelope exchange + dehumidifier
    latent rejection + fan ventilation exchange. Moisture balance:
    transpiration (proportional to air VPD) + humidifier - dehumidifier
    + air exchange against outdoor absolute humidity. Moisture above
    saturation condenses out.
    """
    if not 0.0 < dt <= 10.0:
        raise ValueError("dt must be in (0, 10] s")

    q_heat = bank.output("heater")
    q_cool = bank.output("cooler")
    dehum = bank.output("dehumidifier")
    hum = bank.output("humidifier")
    fan_flow = bank.output("fan")

    t, x = state.t_air, state.abs_humidity
    rh = rh_from_abs_humidity(x, t)
    transp = params.transpiration_rate * max(_es(t) * (1.0 - rh / 100.0), 0.0)
    exchange = params.infiltration + fan_flow

    q_net = (q_heat - q_cool
             + dehum * params.dehumidifier_latent
             + params.envelope_conductance * (sample.t_out - t)
             + _AIR_VOL_HEAT * fan_flow * (sample.t_out - t))
    m_net = (transp + hum - dehum
             + exchange * (sample.abs_humidity - x))

    t_new = t + dt * q_net / params.thermal_capacitance
    x_new = x + dt * m_net / params.moisture_capacitance
    x_new = min(max(x_new, 0.0), saturation_abs_humidity(t_new))
    leaf_new = state.t_leaf + dt * (t - state.t_leaf) / params.leaf_lag

    if not (math.isfinite(t_new) and math.isfinite(x_new)
            and math.isfinite(leaf_new)):
        raise SimulationFault(
            f"non-finite state at clock={state.clock:.0f}s: "
            f"t={t_new} x={x_new} leaf={leaf_new} "
            f"commands={{{', '.join(f'{n}={a.command:.2f}' for n, a in bank.actuators.items())}}}")

    if ledger is not None:
        for name, act in bank.actuators.items():
            ledger.add(name, act.power * act.command, state.clock, dt)

    return ZoneState(t_air=t_new, abs_humidity=x_new, t_leaf=leaf_new,
                     clock=state.clock + dt)


def initial_state(t_air: float, rh: float, clock: float = 0.0) -> ZoneState:
    return ZoneState(t_air=t_air,
                     abs_humidity=abs_humidity_from_rh(rh, t_air),
                     t_leaf=t_air, clock=clock)


# scenario file format: one JSON object with the keys written below.
# "plant" is optional and falls back to PlantParams defaults.

def save_scenario(scenario: WeatherScenario, path: str,
                  params: PlantParams | None = None) -> None:
    doc = {
        "name": scenario.name,
        "seed": scenario.seed,
        "duration_s": scenario.duration_s,
        "weather": {
            "t_mean": scenario.t_mean, "t_amp": scenario.t_amp,
            "rh_mean": scenario.rh_mean, "rh_amp": scenario.rh_amp,
            "t_peak_hour": scenario.t_peak_hour,
        },
        "forecast_noise": {
            "t": scenario.forecast_noise_t, "rh": scenario.forecast_noise_rh,
        },
        "events": [
            {"at_s": e.at_s,
             "duration_s": "inf" if math.isinf(e.duration_s) else e.duration_s,
             "dt_out": e.dt_out, "drh_out": e.drh_out}
            for e in scenario.events
        ],
        "tariff": list(scenario.tariff),
    }
    if params is not None:
        doc["plant"] = dict(params.__dict__)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_scenario(path: str) -> tuple[WeatherScenario, PlantParams]:
    with open(path) as f:
        doc = json.load(f)
    w = doc["weather"]
    events = tuple(
        StepEvent(at_s=float(e["at_s"]),
                  duration_s=math.inf if e["duration_s"] == "inf"
                  else float(e["duration_s"]),
                  dt_out=float(e.get("dt_out", 0.0)),
                  drh_out=float(e.get("drh_out", 0.0)))
        for e in doc.get("events", []))
    noise = doc.get("forecast_noise", {})
    scenario = WeatherScenario(
        name=doc["name"], duration_s=float(doc["duration_s"]),
        t_mean=float(w["t_mean"]), t_amp=float(w["t_amp"]),
        rh_mean=float(w["rh_mean"]), rh_amp=float(w["rh_amp"]),
        tariff=tuple(float(p) for p in doc["tariff"]),
        seed=int(doc["seed"]),
        t_peak_hour=float(w.get("t_peak_hour", 15.0)),
        events=events,
        forecast_noise_t=float(noise.get("t", 1.0)),
        forecast_noise_rh=float(noise.get("rh", 3.0)),
    )
    params = PlantParams(**doc["plant"]) if "plant" in doc else PlantParams()
    return scenario, params
