"""Orchestration: recipe -> optimizer -> inner loops -> zone, and reports.

The cascade chain per zone:

    recipe targets (per day/hour)
      -> rule engine overrides (operator program)
      -> energy-weighted setpoint decomposition on the VPD curve,
         rate-limited to the plant's slew so tracked pairs stay on-curve
      -> two velocity PIDs (temperature, moisture) with NN gain tuners
      -> cycle guard on staged actuators
      -> zone simulator

The baseline comparator is the same loop with the optimizer and tuners
disabled: fixed per-phase setpoints at the recipe midpoints, which is
how conventional single-loop installs run.

run_scenario() is a pure function of (scenario, config, seed): reports
are byte-identical across repeats, which CI diffs rely on.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import random
import statistics
import tempfile
from dataclasses import dataclass, field

from greenloop import plantsim, psychro, vpdopt
from greenloop import recipe as recipe_mod
from greenloop.autonomy import (
    AutonomyEngine, AutonomyLevel, Guardrails, RollingBaseline,
    default_guardrails)
from greenloop.control import (
    CycleGuard, GainSet, NoOscillation, Timeout, VelocityPid, relay_autotune)
from greenloop.fusion import SensorReading, ZoneFusion
from greenloop.nntuner import LyapunovMonitor, NnTuner
from greenloop.telemetry import TelemetryStore, TransferBundle, export_bundle

SETTLE_SIGMA = 0.08        # kPa tracking sigma that counts as settled
SETTLE_WINDOW_S = 1800.0
_SLEW_PER_CYCLE = 0.25     # degC the outer loop may move t* per cycle

# energy-direction weights: which way along the VPD curve is cheap.
# cooling regime: warmer/wetter setpoints shed compressor and dehumidifier
# load; heating regime: cooler setpoints shed heater load at a small
# dehumidifier penalty (a drier curve point means more moisture removal).
ALPHA_SETS = {
    "cooling": {"alpha_h": 1e-3, "alpha_c": 0.5,
                "alpha_d": 0.05, "alpha_m": 1e-3},
    "heating": {"alpha_h": 0.5, "alpha_c": 1e-3,
                "alpha_d": 0.05, "alpha_m": 1e-3},
}


# --- scoring ------------------------------------------------------------

@dataclass(frozen=True)
class RewardWeights:
    """Multi-objective score weights: tracking, energy, wear, violations."""

    w1: float = 1.0     # squared VPD error, kPa^2
    w2: float = 1.0     # energy cost, currency
    w3: float = 0.5     # staged-actuator transitions
    w4: float = 0.1     # squared constraint violations

    def problems(self) -> list[str]:
        out = []
        for name in ("w1", "w2", "w3", "w4"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                out.append(f"reward weight {name} must be finite and >= 0")
        return out


def reward(vpd_err: float, energy_cost: float, switches: int,
           violations, weights: RewardWeights) -> float:
    """One step of the run score; higher is better, perfection is 0."""
    penalty = sum(max(0.0, g) ** 2 for g in violations)
    return (-weights.w1 * vpd_err * vpd_err
            - weights.w2 * energy_cost
            - weights.w3 * switches
            - weights.w4 * penalty)


def recovery_time(trace, disturbance_ts: float,
                  band: float = 0.10, hold_s: float = 60.0) -> float:
    """Seconds from the disturbance until VPD stays within +-band (a
    fraction of the target) for hold_s consecutive seconds. trace is
    (t, vpd, target) samples; math.inf when the band is never held
    through the end of the trace. A controller that never occupies the
    target band at all therefore reports inf: it has no recovery."""
    run_start = None
    for t, vpd_value, target in trace:
        if t < disturbance_ts:
            continue
        if abs(vpd_value - target) <= band * abs(target):
            if run_start is None:
                run_start = t
            if t - run_start >= hold_s:
                return run_start - disturbance_ts
        else:
            run_start = None
    return math.inf


# --- configuration -------------------------------------------------------

@dataclass
class LoopConfig:
    """Everything run_scenario needs besides the scenario itself."""

    outer_period: float = 60.0
    inner_period: float = 10.0
    rh_min: float = 40.0
    rh_max: float = 80.0
    autonomy_level: int = int(AutonomyLevel.L1)
    guardrails: Guardrails | None = None
    plant_signs: dict = field(default_factory=lambda: {"t": 1.0, "rh": 1.0})
    optimizer_enabled: bool = True
    tuner_enabled: bool = True
    sensors_per_point: int = 3
    sensor_noise_t: float = 0.02
    sensor_noise_rh: float = 0.10
    weights: RewardWeights = field(default_factory=RewardWeights)
    settle_sigma: float = SETTLE_SIGMA
    # energy cost coefficients per thermal regime; None = built-in policy
    alpha_sets: dict | None = None

    def problems(self) -> list[str]:
        """Every validation failure, not just the first."""
        out = []
        if self.outer_period <= 0 or self.inner_period <= 0:
            out.append("loop periods must be positive")
        else:
            ratio = self.outer_period / self.inner_period
            if not 3.0 <= ratio <= 10.0:
                out.append(f"outer/inner bandwidth ratio {ratio:.2f} "
                           f"outside [3, 10]")
        if not self.rh_min < self.rh_max:
            out.append("rh_min must be < rh_max")
        if not (0 < self.rh_min and self.rh_max <= 100):
            out.append("humidity bounds must lie in (0, 100]")
        if not 1 <= int(self.autonomy_level) <= 4:
            out.append(f"autonomy level {self.autonomy_level} outside L1..L4")
        if self.sensors_per_point < 1:
            out.append("need at least one sensor per measured point")
        if self.sensor_noise_t < 0 or self.sensor_noise_rh < 0:
            out.append("sensor noise sigmas must be >= 0")
        for kind in ("t", "rh"):
            if self.plant_signs.get(kind) not in (1.0, -1.0):
                out.append(f"plant sign for {kind!r} must be +-1")
        if self.alpha_sets is not None:
            for regime in ("heating", "cooling"):
                coeffs = self.alpha_sets.get(regime)
                if coeffs is None:
                    out.append(f"alpha_sets missing {regime!r} regime")
                elif any(v < 0 for v in coeffs.values()):
                    out.append(f"alpha_sets[{regime!r}] has negative "
                               f"coefficients")
        out.extend(self.weights.problems())
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ValueError("invalid loop config: " + "; ".join(problems))


def equipment_keys(bank) -> dict[str, str]:
    """Equipment-model identifiers used to match transfer-bundle entries."""
    return {
        "t": (f"thermal:heater{bank['heater'].capacity:.0f}w:"
              f"cooler{bank['cooler'].capacity:.0f}w"),
        "rh": (f"moisture:humidifier{bank['humidifier'].capacity:.1f}gs:"
               f"dehumidifier{bank['dehumidifier'].capacity:.1f}gs"),
    }


# --- the run report -------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    controller: str
    seed: int
    hours: float
    total_kwh: float
    tariff_cost: float
    energy_kwh: dict
    vpd_sigma: float
    vpd_mean_abs_err: float
    recovery_s: float | None
    disturbance_at_s: float | None
    reward_total: float
    reward_hourly: list
    switching: dict
    settle_cycles: int | None
    autotune: dict
    gain_envelope: dict
    actions: list
    flags: list

    def to_json(self) -> str:
        doc = dataclasses.asdict(self)
        if doc["recovery_s"] is not None and math.isinf(doc["recovery_s"]):
            doc["recovery_s"] = "inf"
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())


def load_report(path: str) -> RunReport:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("recovery_s") == "inf":
        doc["recovery_s"] = math.inf
    return RunReport(**doc)


# --- the control chain for one zone ---------------------------------------

class ZoneRuntime:
    """One zone's full control chain, stepped a simulated second at a time.

    Owns all mutable state; nothing here touches wall clocks or global
    RNGs, so a runtime driven the same way twice produces identical
    trajectories.
    """

    def __init__(self, scenario, recipe, config: LoopConfig, seed: int = 0,
                 controller: str = "cascade",
                 bundle: TransferBundle | None = None,
                 store: TelemetryStore | None = None,
                 setpoint_offsets: dict | None = None,
                 zone: str = "z1"):
        config.validate()
        if controller not in ("cascade", "baseline"):
            raise ValueError(f"unknown controller {controller!r}")
        self.scenario = scenario
        self.recipe = recipe
        self.config = config
        self.seed = seed
        self.controller = controller
        self.zone = zone
        self.setpoint_offsets = dict(setpoint_offsets or {})

        self.params = plantsim.PlantParams()
        self.bank = plantsim.default_bank()
        self.state = plantsim.initial_state(22.0, 55.0)
        self.ledger = plantsim.EnergyLedger()
        self.store = store
        self.t = 0.0
        self.done = False

        self.engine = AutonomyEngine(
            self._chart(0),
            guardrails=config.guardrails or default_guardrails(),
            level=AutonomyLevel(int(config.autonomy_level)))
        self._rule_engines: dict[int, recipe_mod.RuleEngine] = {}
        self.fuse_t = ZoneFusion()
        self.fuse_rh = ZoneFusion()
        self.baselines = RollingBaseline()
        # noise stream deliberately ignores the controller flavor so a
        # feature-ablated cascade and the baseline see identical sensors
        self._rng = random.Random(f"{seed}:{scenario.name}")

        self.pid_t = VelocityPid(u_min=-1.0, u_max=1.0, u_init=0.0)
        self.pid_rh = VelocityPid(u_min=-1.0, u_max=1.0, u_init=0.0)
        self.guard_dehum = CycleGuard()
        self.gains: dict[str, GainSet] = {}
        self.tuners: dict[str, NnTuner] = {}
        self.monitors: dict[str, LyapunovMonitor] = {}
        self.autotune_info: dict[str, dict] = {}
        self.gain_envelope: dict[str, dict] = {}
        self._pending_weights: dict[str, dict] = {}

        self.t_sp = 22.0
        self.rh_sp = 60.0
        self._coast_t = False
        self.targets: recipe_mod.StageTargets | None = None
        self.vpd_target = 1.0
        self.flags: list[dict] = []
        self.vpd_trace: list[tuple[float, float, float]] = []
        self.err_window: list[tuple[float, float]] = []
        self.settle_cycles: int | None = None
        self._outer_cycles = 0
        self.reward_total = 0.0
        self.reward_hourly: dict[int, float] = {}
        self._fused_t = self.state.t_air
        self._fused_rh = self.state.rh
        # error history per loop: [e(k-1), e(k-2)] for the tuner inputs
        self._e_hist = {"t": [0.0, 0.0], "rh": [0.0, 0.0]}
        self._last_x = {"t": None, "rh": None}
        self._last_transitions = 0
        self._hour_acc: dict[str, list] = {}

        if bundle is not None:
            self._seed_from_bundle(bundle)

    # --- startup ----------------------------------------------------------

    def _seed_from_bundle(self, bundle: TransferBundle) -> None:
        keys = equipment_keys(self.bank)
        for loop, key in keys.items():
            entry = bundle.gains.get(key)
            if entry:
                self.gains[loop] = GainSet(**entry)
                self.autotune_info[loop] = {"source": "bundle"}
            if key in bundle.tuner_weights:
                self._pending_weights[loop] = bundle.tuner_weights[key]
        for series, medians in bundle.baselines.items():
            self.baselines.seed(series, medians)

    def autotune(self) -> None:
        """Relay-tune any loop still without gains, against the live zone."""
        if "t" not in self.gains:
            self.gains["t"] = self._relay("t")
        if "rh" not in self.gains:
            self.gains["rh"] = self._relay("rh")
        self._build_tuners()

    def _all_off(self) -> None:
        for name in ("heater", "cooler", "humidifier", "fan"):
            self.bank[name].set_command(0.0)
        on = self.guard_dehum.filter(False, self.t)
        self.bank["dehumidifier"].set_command(1.0 if on else 0.0)

    def _relay(self, loop: str) -> GainSet:
        sp = self._initial_setpoint(loop)
        self._all_off()

        def plant(u: float) -> float:
            if loop == "t":
                self.bank["heater"].set_command(max(0.0, u))
                self.bank["cooler"].set_command(max(0.0, -u))
            else:
                self.bank["humidifier"].set_command(max(0.0, u))
                on = self.guard_dehum.filter(u < 0.0, self.t)
                self.bank["dehumidifier"].set_command(1.0 if on else 0.0)
            self._advance_plant(1.0)
            return self.state.t_air if loop == "t" else self.state.rh

        try:
            result = relay_autotune(
                plant, sp, h=0.5 if loop == "t" else 1.0,
                sim_dt=1.0, control_dt=self.config.inner_period,
                max_duration=2400.0 if loop == "t" else 3600.0,
                plant_sign=self.config.plant_signs[loop],
                hysteresis=0.05 if loop == "t" else 0.2,
                settle_cycles=1, required_periods=3)
        except (NoOscillation, Timeout) as exc:
            # gentle hand gains so the run can proceed; flagged for review
            self.flags.append({"at_s": self.t, "flag": "autotune-fallback",
                               "loop": loop, "detail": str(exc)})
            self.autotune_info[loop] = {"source": "fallback",
                                        "detail": str(exc)}
            self._all_off()
            return GainSet(0.5, 0.05, 0.0, dt=self.config.inner_period)
        self._all_off()
        self.autotune_info[loop] = {
            "source": "relay", "ku": round(result.ku, 4),
            "tu": round(result.tu, 2),
            "duration_s": round(result.duration, 1),
            "quality": result.quality}
        # PI form: at this control period the thermal/moisture second
        # difference is dominated by sensor noise, so derivative action
        # only injects dither into the actuators
        kp = 0.45 * result.ku
        return GainSet(kp, kp * self.config.inner_period / (result.tu / 1.2),
                       0.0, dt=self.config.inner_period)

    def _chart(self, stage_index: int) -> dict[str, float]:
        """Adjustable chart anchors for the autonomy engine, per phase."""
        stage = self.recipe.stages[stage_index]
        rh_mid = 0.5 * (self.config.rh_min + self.config.rh_max)
        return {
            "t_day": 0.5 * (stage.t_day[0] + stage.t_day[1]),
            "t_night": 0.5 * (stage.t_night[0] + stage.t_night[1]),
            "rh_day": rh_mid,
            "rh_night": rh_mid,
        }

    def _initial_setpoint(self, loop: str) -> float:
        targets = recipe_mod.active_targets(self.recipe, 0, 0.0)
        t_mid = 0.5 * (targets.t_min + targets.t_max)
        if loop == "t":
            return t_mid
        try:
            rh = psychro.rh_for_target(t_mid, targets.vpd_target)
        except (psychro.DomainError, psychro.Unattainable):
            # tuning only needs a plausible operating point; an
            # off-the-curve recipe is the run loop's problem to flag
            rh = 0.5 * (self.config.rh_min + self.config.rh_max)
        return min(max(rh, self.config.rh_min), self.config.rh_max)

    def _build_tuners(self) -> None:
        for loop in ("t", "rh"):
            gains = self.gains[loop]
            self.tuners[loop] = NnTuner(gains, seed=self.seed + 1)
            self.monitors[loop] = LyapunovMonitor()
            self.gain_envelope[loop] = {
                "kp": [gains.kp, gains.kp], "ki": [gains.ki, gains.ki],
                "kd": [gains.kd, gains.kd]}
        for loop, weights in self._pending_weights.items():
            if loop in self.tuners:
                self.tuners[loop].import_weights(weights)

    # --- stepping -----------------------------------------------------------

    def _advance_plant(self, dt: float) -> None:
        weather = self.scenario.outdoor(self.t)
        self.state = plantsim.step(self.state, self.bank, weather,
                                   self.params, dt, self.ledger)
        self.t += dt

    def step_second(self) -> None:
        if self.done:
            return
        if self.t % self.config.outer_period < 1.0:
            self._outer_cycle()
            if self.done:
                return
        if self.t % self.config.inner_period < 1.0:
            self._inner_cycle()
        kwh_before = self.ledger.kwh()
        self._advance_plant(1.0)
        self._score_step(kwh_before)

    def run(self, duration_s: float) -> None:
        end = self.t + duration_s
        while self.t < end and not self.done:
            self.step_second()

    # --- outer loop: targets and decomposition ------------------------------

    def _outer_cycle(self) -> None:
        day = int(self.t // 86400.0)
        hour = (self.t % 86400.0) / 3600.0
        try:
            targets = recipe_mod.active_targets(self.recipe, day, hour)
        except recipe_mod.CycleComplete:
            self.done = True
            return
        self.targets = targets
        t_min, t_max = targets.t_min, targets.t_max
        rh_min, rh_max = self.config.rh_min, self.config.rh_max
        vpd_target = targets.vpd_target

        weather = self.scenario.outdoor(self.t)
        values = {
            "t_air": self._fused_t, "rh": self._fused_rh,
            "vpd": psychro.vpd(self.state.t_air, self.state.rh),
            "t_leaf": self.state.t_leaf,
            "abs_humidity": self.state.abs_humidity,
            "t_out": weather.t_out,
            "rh_out": weather.rh_out,
        }
        engine = self._rule_engines.setdefault(
            targets.stage_index,
            recipe_mod.RuleEngine(
                self.recipe.stages[targets.stage_index].rules))
        outcome = engine.evaluate(values)
        for action in outcome.actions:
            if action.kind == "flag":
                self._flag_once(action.parameter)
            elif action.parameter == "vpd_target":
                vpd_target = action.value
            elif action.parameter == "t_min":
                t_min = action.value
            elif action.parameter == "t_max":
                t_max = max(action.value, t_min + 0.5)
            elif action.parameter == "rh_min":
                rh_min = action.value
            elif action.parameter == "rh_max":
                rh_max = max(action.value, rh_min + 1.0)

        offset = self.setpoint_offsets.get(int(hour) % 24, 0.0)
        if offset and self.controller == "cascade":
            # pre-cooling moves the comfort floor only: the envelope may
            # coast deeper during cheap hours, but the ceiling stays put
            # so the plan can never command paid cooling on its own
            t_min = max(t_min + offset, 8.0)

        self.vpd_target = vpd_target
        # accepted recommendations and bounded autonomous actions live in
        # the engine as phase-keyed chart values; the loop honors them as
        # band shifts against the chart anchor, so guardrail clamping and
        # undo always measure from the recipe, not from prior shifts
        chart = self._chart(targets.stage_index)
        self.engine.recipe_targets.update(chart)
        for key, value in chart.items():
            self.engine.current.setdefault(key, value)
        phase = "day" if targets.day else "night"
        shift = self.engine.current[f"t_{phase}"] - chart[f"t_{phase}"]
        if shift:
            t_min += shift
            t_max += shift
        shift = self.engine.current[f"rh_{phase}"] - chart[f"rh_{phase}"]
        if shift:
            rh_min = min(max(rh_min + shift, 1.0), 99.0)
            rh_max = min(max(rh_max + shift, rh_min + 1.0), 100.0)

        self._coast_t = False
        if self.config.optimizer_enabled and self.controller == "cascade":
            # the cheap thermal direction is wherever envelope heat flow
            # already points: paying to fight the weather is never optimal
            regime = "cooling" if weather.t_out > self._fused_t \
                else "heating"
            table = self.config.alpha_sets or ALPHA_SETS
            alpha = vpdopt.EnergyCostCoefficients(**table[regime])
            try:
                opt = vpdopt.optimize_setpoints(
                    self._fused_t, self._fused_rh, vpd_target,
                    vpdopt.SetpointBounds(t_min, t_max, rh_min, rh_max),
                    alpha)
                t_star = opt.t
                if opt.warning:
                    self._flag_once(f"optimizer:{opt.warning}")
            except (vpdopt.Infeasible, vpdopt.UnattainableTarget) as exc:
                self._flag_once(f"optimizer:{exc}")
                t_star = 0.5 * (t_min + t_max)
            t_star = min(max(t_star, t_min), t_max)
            in_band = t_min <= self._fused_t <= t_max
            if in_band and \
                    (t_star - self._fused_t) * (weather.t_out
                                                - self._fused_t) > 0:
                # the weather is already pushing this way: idle the
                # thermal loop and let the envelope do the work free
                self._coast_t = True
                t_cmd = min(max(self._fused_t, t_min), t_max)
            else:
                # rate-limit the reference, not the error: the setpoint
                # walks at a pace the plant can follow so the commanded
                # pair stays on the VPD curve instead of teleporting.
                # When the moisture loop lags its own setpoint the walk
                # crawls; outrunning the dehumidifier drags VPD off
                # target.
                slew = _SLEW_PER_CYCLE \
                    if abs(self.rh_sp - self._fused_rh) <= 2.0 else 0.05
                t_cmd = self.t_sp + min(max(t_star - self.t_sp, -slew),
                                        slew)
            # the moisture loop holds the curve at the temperature the
            # zone actually has; T tracking error is then absorbed by
            # humidity compensation instead of showing up in VPD
            try:
                rh_cmd = psychro.rh_for_target(self._fused_t, vpd_target)
            except (psychro.DomainError, psychro.Unattainable):
                rh_cmd = 0.5 * (rh_min + rh_max)
        elif self.controller == "cascade":
            # optimizer ablated: chart temperature, but the moisture
            # setpoint still comes off the VPD curve (the decomposition
            # is wiring, not optimization) -- the debugging middle ground
            t_cmd = 0.5 * (t_min + t_max)
            try:
                rh_cmd = psychro.rh_for_target(t_cmd, vpd_target)
            except (psychro.DomainError, psychro.Unattainable):
                rh_cmd = 0.5 * (rh_min + rh_max)
        else:
            # conventional install: two independent loops on per-phase
            # chart setpoints, blind to the VPD curve that couples them
            t_cmd = 0.5 * (t_min + t_max)
            rh_cmd = 0.5 * (rh_min + rh_max)
        self.t_sp = t_cmd
        self.rh_sp = min(max(rh_cmd, rh_min), rh_max)

        self._outer_cycles += 1
        self._update_settle()

    def _flag_once(self, flag: str) -> None:
        if not any(f["flag"] == flag for f in self.flags[-20:]):
            self.flags.append({"at_s": self.t, "flag": flag})

    def _update_settle(self) -> None:
        if self.settle_cycles is not None:
            return
        cutoff = self.t - SETTLE_WINDOW_S
        self.err_window = [(t, e) for t, e in self.err_window if t >= cutoff]
        needed = SETTLE_WINDOW_S / self.config.inner_period * 0.8
        if len(self.err_window) < needed:
            return
        sigma = statistics.pstdev(e for _, e in self.err_window)
        if sigma < self.config.settle_sigma:
            # counted from run start so tuning time is part of the bill
            self.settle_cycles = int(self.t // self.config.outer_period)

    # --- inner loop: fusion, PIDs, tuners -------------------------------------

    def _sense(self, kind: str, truth: float, noise: float) -> float:
        fuse = self.fuse_t if kind == "t_air" else self.fuse_rh
        readings = [
            SensorReading(f"{kind}-{i}", kind,
                          truth + self._rng.gauss(0.0, noise), self.t)
            for i in range(self.config.sensors_per_point)]
        result, events = fuse.step(readings)
        for event in events:
            self.flags.append({"at_s": self.t,
                               "flag": f"sensor-{event.action}",
                               "sensor": event.sensor_id})
        return result.value

    def _loop_step(self, loop: str, pid: VelocityPid, sp: float,
                   pv: float) -> float:
        e = sp - pv
        e1, e2 = self._e_hist[loop]
        gains = self.gains[loop]
        tuned = self.config.tuner_enabled and self.controller == "cascade"
        if tuned:
            net = self.tuners[loop]
            x = net.scales.vector(e, e1, e2, sp, pv, pid.u)
            gains = net.gains(x)
            self._last_x[loop] = x
            env = self.gain_envelope[loop]
            for name in ("kp", "ki", "kd"):
                v = getattr(gains, name)
                env[name][0] = min(env[name][0], v)
                env[name][1] = max(env[name][1], v)
        _, u = pid.step(gains, sp, pv)
        if tuned and self._last_x[loop] is not None:
            net = self.tuners[loop]
            net.train_step(self._last_x[loop], e, e1, e2,
                           self.config.plant_signs[loop],
                           output_clamped=pid.saturated)
            self.monitors[loop].observe(e1, e, net)
        self._e_hist[loop] = [e, e1]
        return u

    def _inner_cycle(self) -> None:
        self._fused_t = self._sense("t_air", self.state.t_air,
                                    self.config.sensor_noise_t)
        self._fused_rh = self._sense("rh", self.state.rh,
                                     self.config.sensor_noise_rh)

        u_rh = self._loop_step("rh", self.pid_rh, self.rh_sp, self._fused_rh)
        on = self.guard_dehum.filter(u_rh < -0.1, self.t)
        self.bank["dehumidifier"].set_command(1.0 if on else 0.0)
        if on:
            # tracking anti-windup against the stage hold: while the cycle
            # guard pins the dehumidifier on, its min-on burst over-dries
            # and the loop would wind up positive, firing the humidifier
            # against water the stage just removed (at 2450 J/g condenser
            # heat the cooler then pays for). Clamp the loop to the
            # realized command instead and keep the humidifier out of it.
            self.pid_rh.u = min(self.pid_rh.u, -0.1)
            u_rh = min(u_rh, -0.1)
        # split-range with a deadband: the humidifier answers sustained
        # humidification demand only, not cycling-range ripple
        self.bank["humidifier"].set_command(max(0.0, (u_rh - 0.10) / 0.90))

        if self._coast_t:
            # economizer behaviour: neither thermal actuator runs while
            # the envelope drives the zone toward the cheap band edge.
            # Keeping the error history current makes the resume bumpless.
            e = self.t_sp - self._fused_t
            self.pid_t.u = 0.0
            self.pid_t.e1 = self.pid_t.e2 = e
            self.pid_t.saturated = False
            u_t = 0.0
        else:
            u_t = self._loop_step("t", self.pid_t, self.t_sp, self._fused_t)
        self.bank["heater"].set_command(max(0.0, u_t))
        self.bank["cooler"].set_command(max(0.0, -u_t))

        vpd_now = psychro.vpd(self.state.t_air, self.state.rh)
        err = vpd_now - self.vpd_target
        self.vpd_trace.append((self.t, vpd_now, self.vpd_target))
        self.err_window.append((self.t, err))
        if self.store is not None:
            self.store.record(f"{self.zone}.t_air.fused",
                              [(self.t, self._fused_t)])
            self.store.record(f"{self.zone}.rh.fused",
                              [(self.t, self._fused_rh)])
            self.store.record(f"{self.zone}.vpd.fused", [(self.t, vpd_now)])
        self._hourly_baseline(vpd_now)

    def _hourly_baseline(self, vpd_now: float) -> None:
        acc = self._hour_acc
        for series, value in (("t_air", self.state.t_air),
                              ("rh", self.state.rh), ("vpd", vpd_now)):
            acc.setdefault(series, []).append(value)
        if (self.t + self.config.inner_period) % 3600.0 \
                < self.config.inner_period:
            hour = int(self.t // 3600.0) % 24
            for series, values in acc.items():
                self.baselines.add(f"{self.zone}.{series}", hour,
                                   sum(values) / len(values))
            acc.clear()

    # --- per-second scoring ----------------------------------------------------

    def _score_step(self, kwh_before: float) -> None:
        tariff = self.scenario.tariff_at(self.t - 1.0)
        cost = (self.ledger.kwh() - kwh_before) * tariff
        switches = self.guard_dehum.transitions - self._last_transitions
        self._last_transitions = self.guard_dehum.transitions
        violations = ()
        if self.targets is not None:
            violations = (
                self.state.t_air - self.targets.t_max,
                self.targets.t_min - self.state.t_air,
                self.state.rh - self.config.rh_max,
                self.config.rh_min - self.state.rh,
            )
        err = psychro.vpd(self.state.t_air, self.state.rh) - self.vpd_target
        score = reward(err, cost, switches, violations, self.config.weights)
        self.reward_total += score
        hour = int((self.t - 1.0) // 3600.0)
        self.reward_hourly[hour] = self.reward_hourly.get(hour, 0.0) + score

    # --- snapshot (API surface) --------------------------------------------------

    def snapshot(self) -> dict:
        vpd_now = psychro.vpd(self.state.t_air, self.state.rh)
        weather = self.scenario.outdoor(self.t)
        return {
            "zone": self.zone,
            "sim_time_s": self.t,
            "t_air": round(self.state.t_air, 3),
            "rh": round(self.state.rh, 3),
            "vpd": round(vpd_now, 4),
            "t_leaf": round(self.state.t_leaf, 3),
            "vpd_target": round(self.vpd_target, 4),
            "t_setpoint": round(self.t_sp, 3),
            "rh_setpoint": round(self.rh_sp, 3),
            "t_out": round(weather.t_out, 2),
            "rh_out": round(weather.rh_out, 2),
            "actuators": {
                name: round(act.command, 3)
                for name, act in sorted(self.bank.actuators.items())},
            "autonomy_level": self.engine.level.name,
            "controller": self.controller,
            "flags": self.flags[-5:],
        }


# --- scenario running ---------------------------------------------------------

def default_recipe() -> recipe_mod.Recipe:
    """The stock two-stage leafy-green program used by demos and tests."""
    fd, path = tempfile.mkstemp(suffix=".json")
    os.close(fd)
    try:
        recipe_mod.save_recipe_example(path)
        return recipe_mod.load_recipe(path)
    finally:
        os.unlink(path)


def run_scenario(scenario, controller: str = "cascade",
                 config: LoopConfig | None = None, seed: int = 0,
                 recipe: recipe_mod.Recipe | None = None,
                 hours: float | None = None,
                 bundle: TransferBundle | None = None,
                 store: TelemetryStore | None = None,
                 setpoint_offsets: dict | None = None) -> RunReport:
    """Autotune (unless bundle-seeded), run the loop, report the run."""
    if isinstance(scenario, str):
        table = plantsim.builtin_scenarios()
        if scenario not in table:
            raise KeyError(f"unknown scenario {scenario!r}")
        scenario = table[scenario]
    config = config or LoopConfig()
    config.validate()
    recipe = recipe or default_recipe()

    duration = scenario.duration_s if hours is None else hours * 3600.0
    duration = min(duration, scenario.duration_s)

    runtime = ZoneRuntime(scenario, recipe, config, seed=seed,
                          controller=controller, bundle=bundle, store=store,
                          setpoint_offsets=setpoint_offsets)
    if duration > 0:
        runtime.autotune()
        runtime.run(duration - runtime.t)
    return build_report(runtime, scenario, duration)


def build_report(runtime: ZoneRuntime, scenario, duration: float) -> RunReport:
    errs = [v - target for _, v, target in runtime.vpd_trace]
    energy = plantsim.energy_report(runtime.ledger, scenario)
    disturbance = scenario.events[0].at_s if scenario.events else None
    recovery = None
    if disturbance is not None and duration > disturbance:
        recovery = recovery_time(runtime.vpd_trace, disturbance)
    hours = sorted(runtime.reward_hourly)
    return RunReport(
        scenario=scenario.name,
        controller=runtime.controller,
        seed=runtime.seed,
        hours=duration / 3600.0,
        total_kwh=round(energy.total_kwh, 6),
        tariff_cost=round(energy.cost, 6),
        energy_kwh={k: round(runtime.ledger.kwh(k), 6)
                    for k in sorted(runtime.ledger.wh)},
        vpd_sigma=round(statistics.pstdev(errs), 6) if len(errs) > 1 else 0.0,
        vpd_mean_abs_err=round(sum(abs(e) for e in errs) / len(errs), 6)
        if errs else 0.0,
        recovery_s=recovery,
        disturbance_at_s=disturbance,
        reward_total=round(runtime.reward_total, 6),
        reward_hourly=[round(runtime.reward_hourly[h], 6) for h in hours],
        switching={"dehumidifier": runtime.guard_dehum.transitions},
        settle_cycles=runtime.settle_cycles,
        autotune=runtime.autotune_info,
        gain_envelope={loop: {k: [round(v[0], 6), round(v[1], 6)]
                              for k, v in env.items()}
                       for loop, env in runtime.gain_envelope.items()},
        actions=[dataclasses.asdict(e) for e in runtime.engine.log],
        flags=runtime.flags[:200],
    )


def export_facility_bundle(runtime: ZoneRuntime,
                           facility_id: str = "sim") -> TransferBundle:
    """Everything learned in a run, keyed by equipment model."""
    keys = equipment_keys(runtime.bank)
    gains = {}
    weights = {}
    for loop, key in keys.items():
        g = runtime.gains.get(loop)
        if g is not None:
            gains[key] = {"kp": g.kp, "ki": g.ki, "kd": g.kd, "dt": g.dt}
        tuner = runtime.tuners.get(loop)
        if tuner is not None:
            weights[key] = tuner.export_weights()
    trajectories = {
        runtime.recipe.name: {
            stage.name: {"vpd_day": stage.vpd_day,
                         "vpd_night": stage.vpd_night}
            for stage in runtime.recipe.stages}}
    return export_bundle(
        facility_id, gains, weights,
        vpd_trajectories=trajectories,
        baselines=runtime.baselines.export(),
        alpha_sets=ALPHA_SETS,
        exported_at=runtime.t)
